use exmol::lsmc::{lsmc_price, McConfig};
use exmol::margrabe::{margrabe_price, MargrabeInputs};
use exmol::pricer::{solve, OptionStyle, SolverConfig};
use exmol::{Error, MeshSpec, ModelParams};

/// No jumps, no yields, variance pinned at its mean.
fn constant_vol() -> ModelParams {
    let mut p = ModelParams::table1();
    p.q1 = 0.0;
    p.q2 = 0.0;
    p.jump1.intensity = 0.0;
    p.jump2.intensity = 0.0;
    p.variance.omega = 1e-4;
    p.variance.xi = 50.0;
    p
}

#[test]
fn european_mol_matches_margrabe() {
    let p = constant_vol();
    let mesh = MeshSpec::reference().build(p.maturity).unwrap();
    let sol = solve(&p, &mesh, OptionStyle::European, &SolverConfig::default()).unwrap();
    let inp = MargrabeInputs::from_params(&p, p.maturity);
    for s in [0.5, 0.8, 1.0, 1.2, 1.7, 2.5] {
        let mol = sol.price_at(s, p.variance.eta).unwrap();
        let exact = margrabe_price(s, &inp);
        assert!((mol - exact).abs() < 1e-2, "s={s}: {mol} vs {exact}");
    }
}

#[test]
fn european_mol_matches_margrabe_with_yields() {
    let mut p = constant_vol();
    p.q1 = 0.05;
    p.q2 = 0.03;
    let mesh = MeshSpec::reference().build(p.maturity).unwrap();
    let sol = solve(&p, &mesh, OptionStyle::European, &SolverConfig::default()).unwrap();
    let inp = MargrabeInputs::from_params(&p, p.maturity);
    for s in [0.6, 1.0, 1.4, 2.0] {
        let mol = sol.price_at(s, p.variance.eta).unwrap();
        let exact = margrabe_price(s, &inp);
        assert!((mol - exact).abs() < 1e-2, "s={s}: {mol} vs {exact}");
    }
}

#[test]
fn lsmc_without_dividend_matches_margrabe() {
    let p = constant_vol();
    let cfg = McConfig {
        paths: 20_000,
        steps: 100,
        ..McConfig::default()
    };
    let inp = MargrabeInputs::from_params(&p, p.maturity);
    for s in [0.9, 1.2] {
        let est = lsmc_price(&p, s, p.variance.eta, &cfg).unwrap();
        let exact = margrabe_price(s, &inp);
        assert!(
            (est.price - exact).abs() <= 3.0 * est.std_error,
            "s={s}: {} +- {} vs {exact}",
            est.price,
            est.std_error
        );
    }
}

#[test]
fn american_without_first_yield_is_rejected() {
    let p = constant_vol();
    let mesh = MeshSpec::reference().build(p.maturity).unwrap();
    let err = solve(&p, &mesh, OptionStyle::American, &SolverConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NoEarlyExercise), "{err}");
}
