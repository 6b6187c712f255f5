//! The `(tau, v, s)` lattice shared by the line solvers.
//!
//! Time-to-maturity and variance are uniform partitions. The spatial axis is
//! assembled from contiguous segments, each uniformly subdivided; adjacent
//! segments share their junction node, so a mesh built from segments with
//! `n_1, ..., n_k` intervals has `J = n_1 + ... + n_k` intervals and `J + 1`
//! nodes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly subdivided piece `[start, end]` of the spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub intervals: usize,
}

impl Segment {
    pub fn new(start: f64, end: f64, intervals: usize) -> Self {
        Self {
            start,
            end,
            intervals,
        }
    }
}

/// Segment list in the `start:end:intervals,...` text form used on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentList(pub Vec<Segment>);

impl SegmentList {
    /// `[0,0.5]`, `[0.5,3]`, `[3,4]` with 20, 80 and 40 intervals.
    pub fn reference() -> Self {
        Self(vec![
            Segment::new(0.0, 0.5, 20),
            Segment::new(0.5, 3.0, 80),
            Segment::new(3.0, 4.0, 40),
        ])
    }

    pub fn uniform(end: f64, intervals: usize) -> Self {
        Self(vec![Segment::new(0.0, end, intervals)])
    }

    pub fn end(&self) -> f64 {
        self.0.last().map(|s| s.end).unwrap_or(0.0)
    }

    /// Same segments with every interval count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self(
            self.0
                .iter()
                .map(|s| Segment::new(s.start, s.end, s.intervals * factor))
                .collect(),
        )
    }
}

impl FromStr for SegmentList {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let fields: Vec<&str> = part.split(':').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidMesh(format!(
                    "segment `{part}` must be start:end:intervals"
                )));
            }
            let parse_f = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidMesh(format!("bad number `{s}` in `{part}`")))
            };
            let intervals = fields[2]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidMesh(format!("bad interval count in `{part}`")))?;
            out.push(Segment::new(
                parse_f(fields[0])?,
                parse_f(fields[1])?,
                intervals,
            ));
        }
        if out.is_empty() {
            return Err(Error::InvalidMesh("empty segment list".into()));
        }
        Ok(Self(out))
    }
}

impl fmt::Display for SegmentList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|s| format!("{}:{}:{}", s.start, s.end, s.intervals))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Discretization parameters independent of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n_time: usize,
    pub m_var: usize,
    pub v_max: f64,
    pub segments: SegmentList,
}

impl MeshSpec {
    /// `N = 30`, `M = 25`, `v_max = 2` and the three-segment `s` axis on `[0, 4]`.
    pub fn reference() -> Self {
        Self {
            n_time: 30,
            m_var: 25,
            v_max: 2.0,
            segments: SegmentList::reference(),
        }
    }

    pub fn build(&self, maturity: f64) -> Result<Mesh> {
        build_mesh(
            self.n_time,
            self.m_var,
            &self.segments,
            maturity,
            self.v_max,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mesh {
    tau: Vec<f64>,
    v: Vec<f64>,
    space: Vec<f64>,
    segments: Vec<Segment>,
}

/// Result of [`Mesh::locate`]: `x ~ nodes[index] + weight * (nodes[index+1] - nodes[index])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub index: usize,
    pub weight: f64,
    /// The query lay outside `[nodes[0], nodes[last]]`.
    pub extrapolated: bool,
}

impl Location {
    #[inline]
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        let a = values[self.index];
        let b = values[self.index + 1];
        a + self.weight * (b - a)
    }
}

/// Finds the interval containing `x` on an increasing node array with at least
/// two entries. Points left of the first node or right of the last one map to
/// the end intervals with weights outside `[0, 1]`.
pub fn locate_in(nodes: &[f64], x: f64) -> Location {
    let last = nodes.len() - 1;
    let (index, extrapolated) = if x < nodes[0] {
        (0, true)
    } else if x > nodes[last] {
        (last - 1, true)
    } else {
        // partition_point gives the first node > x
        let p = nodes.partition_point(|&n| n <= x);
        (p.saturating_sub(1).min(last - 1), false)
    };
    let h = nodes[index + 1] - nodes[index];
    Location {
        index,
        weight: (x - nodes[index]) / h,
        extrapolated,
    }
}

fn uniform(start: f64, end: f64, intervals: usize) -> Vec<f64> {
    let h = (end - start) / intervals as f64;
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                end
            } else {
                start + h * i as f64
            }
        })
        .collect()
}

fn concat_segments(segments: &[Segment]) -> Result<Vec<f64>> {
    let mut nodes: Vec<f64> = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        if seg.intervals < 1 {
            return Err(Error::InvalidMesh(format!(
                "segment {k} needs at least two nodes"
            )));
        }
        if !(seg.end > seg.start) || !seg.start.is_finite() || !seg.end.is_finite() {
            return Err(Error::InvalidMesh(format!(
                "segment {k} [{}, {}] is empty or not finite",
                seg.start, seg.end
            )));
        }
        if let Some(&prev_end) = nodes.last() {
            if (seg.start - prev_end).abs() > 1e-12 * prev_end.abs().max(1.0) {
                return Err(Error::InvalidMesh(format!(
                    "segment {k} starts at {} but previous ends at {prev_end}",
                    seg.start
                )));
            }
            nodes.extend(
                uniform(prev_end, seg.end, seg.intervals)
                    .into_iter()
                    .skip(1),
            );
        } else {
            nodes.extend(uniform(seg.start, seg.end, seg.intervals));
        }
    }
    Ok(nodes)
}

/// Builds the pricing lattice.
pub fn build_mesh(
    n_time: usize,
    m_var: usize,
    segments: &SegmentList,
    maturity: f64,
    v_max: f64,
) -> Result<Mesh> {
    if n_time < 3 {
        return Err(Error::InvalidMesh(format!(
            "N = {n_time}: at least 3 time steps are required"
        )));
    }
    if m_var < 4 {
        return Err(Error::InvalidMesh(format!(
            "M = {m_var}: at least 4 variance intervals are required"
        )));
    }
    if !(maturity > 0.0) || !(v_max > 0.0) {
        return Err(Error::InvalidMesh(format!(
            "maturity {maturity} and v_max {v_max} must be positive"
        )));
    }
    let first = segments
        .0
        .first()
        .ok_or_else(|| Error::InvalidMesh("no s segments".into()))?;
    if first.start != 0.0 {
        return Err(Error::InvalidMesh(format!(
            "s axis must start at 0, got {}",
            first.start
        )));
    }
    let space = concat_segments(&segments.0)?;
    Ok(Mesh {
        tau: uniform(0.0, maturity, n_time),
        v: uniform(0.0, v_max, m_var),
        space,
        segments: segments.0.clone(),
    })
}

impl Mesh {
    /// Lattice on the log-ratio axis `x in [-x_max, x_max]` used by the density solver.
    pub fn log_ratio(
        n_time: usize,
        m_var: usize,
        maturity: f64,
        v_max: f64,
        x_max: f64,
        x_intervals: usize,
    ) -> Result<Mesh> {
        if !(x_max > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "x_max = {x_max} must be positive"
            )));
        }
        let mut mesh = build_mesh(
            n_time,
            m_var,
            &SegmentList::uniform(1.0, 1),
            maturity,
            v_max,
        )?;
        let seg = Segment::new(-x_max, x_max, x_intervals);
        mesh.space = concat_segments(&[seg])?;
        mesh.segments = vec![seg];
        Ok(mesh)
    }

    /// The same lattice with the whole `tau`/`v`/`s` grid shifted along `s` by `dx`.
    pub fn shifted(&self, dx: f64) -> Mesh {
        let mut m = self.clone();
        for x in &mut m.space {
            *x += dx;
        }
        for seg in &mut m.segments {
            seg.start += dx;
            seg.end += dx;
        }
        m
    }

    pub fn tau_nodes(&self) -> &[f64] {
        &self.tau
    }

    pub fn v_nodes(&self) -> &[f64] {
        &self.v
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.space
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of time steps `N`.
    pub fn n_time(&self) -> usize {
        self.tau.len() - 1
    }

    /// Index of the last variance line `M`.
    pub fn m_var(&self) -> usize {
        self.v.len() - 1
    }

    /// Number of spatial intervals `J`.
    pub fn j_space(&self) -> usize {
        self.space.len() - 1
    }

    pub fn d_tau(&self) -> f64 {
        self.tau[1] - self.tau[0]
    }

    pub fn d_v(&self) -> f64 {
        self.v[1] - self.v[0]
    }

    pub fn maturity(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    pub fn s_max(&self) -> f64 {
        *self.space.last().unwrap()
    }

    pub fn v_max(&self) -> f64 {
        *self.v.last().unwrap()
    }

    /// Interval lookup on the pricing axis; negative `s` is rejected.
    pub fn locate(&self, s: f64) -> Result<Location> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::NegativeCoordinate(s));
        }
        Ok(locate_in(&self.space, s))
    }

    /// Index of the variance node closest to `v`.
    pub fn nearest_v(&self, v: f64) -> usize {
        let idx = (v / self.d_v()).round();
        (idx.max(0.0) as usize).min(self.m_var())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_mesh_counts() {
        let mesh = MeshSpec::reference().build(0.5).unwrap();
        assert_eq!(mesh.s_nodes().len(), 141);
        assert_eq!(mesh.j_space(), 140);
        assert_abs_diff_eq!(mesh.d_tau(), 0.5 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mesh.d_v(), 2.0 / 25.0, epsilon = 1e-15);
        assert_eq!(mesh.s_nodes()[0], 0.0);
        assert_eq!(mesh.s_nodes()[20], 0.5);
        assert_eq!(mesh.s_nodes()[100], 3.0);
        assert_eq!(mesh.s_max(), 4.0);
        assert!(mesh.s_nodes().windows(2).all(|w| w[1] > w[0]));
        // uniformity of tau and v
        let dt = mesh.d_tau();
        assert!(mesh
            .tau_nodes()
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() < 1e-12));
        let dv = mesh.d_v();
        assert!(mesh
            .v_nodes()
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dv).abs() < 1e-12));
    }

    #[test]
    fn single_segment_uniform() {
        let mesh = build_mesh(3, 4, &SegmentList::uniform(4.0, 3), 1.0, 1.0).unwrap();
        let s = mesh.s_nodes();
        assert_eq!(s.len(), 4);
        assert_abs_diff_eq!(s[1], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[2], 8.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s[3], 4.0);
    }

    #[test]
    fn too_few_time_steps_rejected() {
        let r = build_mesh(2, 25, &SegmentList::reference(), 0.5, 2.0);
        assert!(matches!(r, Err(Error::InvalidMesh(_))));
        let r = build_mesh(30, 3, &SegmentList::reference(), 0.5, 2.0);
        assert!(matches!(r, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn discontiguous_segments_rejected() {
        let segs: SegmentList = "0:1:4,1.5:2:4".parse().unwrap();
        assert!(build_mesh(3, 4, &segs, 1.0, 1.0).is_err());
        let segs: SegmentList = "0.1:1:4".parse().unwrap();
        assert!(build_mesh(3, 4, &segs, 1.0, 1.0).is_err());
    }

    #[test]
    fn segment_list_parses_cli_form() {
        let segs: SegmentList = "0:0.5:20,0.5:3:80,3:4:40".parse().unwrap();
        assert_eq!(segs, SegmentList::reference());
        assert_eq!(segs.to_string(), "0:0.5:20,0.5:3:80,3:4:40");
        assert!("0:1".parse::<SegmentList>().is_err());
    }

    #[test]
    fn locate_examples() {
        let mesh = MeshSpec::reference().build(0.5).unwrap();
        let s = mesh.s_nodes();
        let hit = mesh.locate(s[5]).unwrap();
        assert_eq!((hit.index, hit.weight, hit.extrapolated), (5, 0.0, false));

        let mid = mesh.locate(0.5 * (s[5] + s[6])).unwrap();
        assert_eq!(mid.index, 5);
        assert_abs_diff_eq!(mid.weight, 0.5, epsilon = 1e-12);

        let out = mesh.locate(mesh.s_max() * 1.1).unwrap();
        assert_eq!(out.index, mesh.j_space() - 1);
        assert!(out.weight > 1.0);
        assert!(out.extrapolated);

        assert!(matches!(
            mesh.locate(-1e-3),
            Err(Error::NegativeCoordinate(_))
        ));
    }

    proptest! {
        #[test]
        fn locate_reproduces_piecewise_linear(x in 0.0f64..4.0, slope_a in -3.0f64..3.0, slope_b in -3.0f64..3.0) {
            let mesh = MeshSpec::reference().build(0.5).unwrap();
            // piecewise linear with a kink at a mesh node
            let f = |s: f64| if s < 1.5 { slope_a * s } else { slope_a * 1.5 + slope_b * (s - 1.5) };
            let values: Vec<f64> = mesh.s_nodes().iter().map(|&s| f(s)).collect();
            let loc = mesh.locate(x).unwrap();
            prop_assert!((loc.interpolate(&values) - f(x)).abs() < 1e-12);
        }
    }
}
