//! Run configuration: the flat `key = value` model file, optionally extended
//! with mesh keys.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{MeshSpec, SegmentList};
use crate::model::ModelParams;
use crate::quadrature::DEFAULT_ORDER;

/// Mesh keys accepted next to the model keys.
pub const MESH_KEYS: [&str; 8] = ["x_max", "s_J", "v_M", "N", "M", "J", "L", "segments"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub mesh: MeshSpec,
    pub x_max: f64,
    pub quadrature_order: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::table1(),
            mesh: MeshSpec::reference(),
            x_max: 5.0,
            quadrature_order: DEFAULT_ORDER,
        }
    }
}

fn as_f64(key: &str, value: &toml::Value) -> Result<f64> {
    match value {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("`{key}` must be a number"))),
    }
}

fn as_count(key: &str, value: &toml::Value) -> Result<usize> {
    match value {
        toml::Value::Integer(i) if *i > 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!("`{key}` must be a positive integer"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut model = toml::Table::new();
        let mut cfg = RunConfig::default();
        let mut s_j = None;
        let mut j_total = None;
        let mut segments_given = false;
        for (key, value) in table {
            match key.as_str() {
                "x_max" => cfg.x_max = as_f64(&key, &value)?,
                "s_J" => s_j = Some(as_f64(&key, &value)?),
                "v_M" => cfg.mesh.v_max = as_f64(&key, &value)?,
                "N" => cfg.mesh.n_time = as_count(&key, &value)?,
                "M" => cfg.mesh.m_var = as_count(&key, &value)?,
                "J" => j_total = Some(as_count(&key, &value)?),
                "L" => cfg.quadrature_order = as_count(&key, &value)?,
                "segments" => {
                    let text = value
                        .as_str()
                        .ok_or_else(|| Error::Config("`segments` must be a string".into()))?;
                    cfg.mesh.segments = text.parse()?;
                    segments_given = true;
                }
                _ => {
                    model.insert(key, value);
                }
            }
        }
        let model_text = toml::to_string(&model).map_err(|e| Error::Config(e.to_string()))?;
        cfg.params = ModelParams::from_config_str(&model_text)?;
        // Without explicit segments a non-reference s_J or J means a uniform axis.
        let reference = SegmentList::reference();
        let reference_total: usize = reference.0.iter().map(|s| s.intervals).sum();
        if !segments_given
            && (s_j.is_some_and(|e| e != reference.end())
                || j_total.is_some_and(|j| j != reference_total))
        {
            cfg.mesh.segments = SegmentList::uniform(
                s_j.unwrap_or(reference.end()),
                j_total.unwrap_or(reference_total),
            );
        }
        let total: usize = cfg.mesh.segments.0.iter().map(|s| s.intervals).sum();
        if let Some(j) = j_total {
            if j != total {
                return Err(Error::Config(format!(
                    "J = {j} disagrees with the {total} intervals of `segments`"
                )));
            }
        }
        if let Some(end) = s_j {
            if (end - cfg.mesh.segments.end()).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "s_J = {end} disagrees with the segment end {}",
                    cfg.mesh.segments.end()
                )));
            }
        }
        if !(cfg.x_max > 0.0) {
            return Err(Error::Config(format!(
                "x_max = {} must be positive",
                cfg.x_max
            )));
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Canonical text of every setting, in fixed key order.
    pub fn canonical(&self) -> String {
        let mut out = self.params.to_config_string();
        let total: usize = self.mesh.segments.0.iter().map(|s| s.intervals).sum();
        out.push_str(&format!("x_max = {:?}\n", self.x_max));
        out.push_str(&format!("s_J = {:?}\n", self.mesh.segments.end()));
        out.push_str(&format!("v_M = {:?}\n", self.mesh.v_max));
        out.push_str(&format!("N = {}\n", self.mesh.n_time));
        out.push_str(&format!("M = {}\n", self.mesh.m_var));
        out.push_str(&format!("J = {total}\n"));
        out.push_str(&format!("L = {}\n", self.quadrature_order));
        out.push_str(&format!("segments = \"{}\"\n", self.mesh.segments));
        out
    }
}

/// Hex SHA-256 of the canonical configuration plus the command-specific options.
pub fn config_hash(cfg: &RunConfig, options: &str) -> String {
    let mut h = Sha256::new();
    h.update(cfg.canonical().as_bytes());
    h.update(b"\n");
    h.update(options.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = include_str!("../../../../configs/table1.cfg");

    #[test]
    fn table1_file_parses() {
        let cfg = RunConfig::parse(TABLE1).unwrap();
        assert_eq!(cfg.params, ModelParams::table1());
        assert_eq!(cfg.mesh.m_var, 25);
        assert_eq!(cfg.x_max, 5.0);
        assert_eq!(cfg.quadrature_order, 20);
    }

    #[test]
    fn canonical_round_trips() {
        let cfg = RunConfig::parse(TABLE1).unwrap();
        let again = RunConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(config_hash(&cfg, "a"), config_hash(&again, "a"));
        assert_ne!(config_hash(&cfg, "a"), config_hash(&cfg, "b"));
    }

    #[test]
    fn unknown_and_inconsistent_keys_rejected() {
        let typo = format!("{TABLE1}\nsigma3 = 0.1\n");
        assert!(RunConfig::parse(&typo).is_err());
        let bad_j = TABLE1.replace("J = 140", "J = 141");
        assert!(RunConfig::parse(&bad_j).is_err());
        assert!(RunConfig::parse("q1 = 0.05").is_err());
    }
}
