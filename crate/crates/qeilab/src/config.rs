//! Experiment configuration: a sectioned key-value format (TOML syntax in
//! `.cfg` files) that round-trips losslessly through serde.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QeiError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub circumference: f64,
    pub half_width: f64,
    pub nt: usize,
    pub nx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSection {
    pub order: u32,
}

/// Gaussian-core test function: `exp(-t^2/2 sigma^2)` times a plateau ramp in
/// time, constant around the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSection {
    pub sigma: f64,
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

/// Plateau envelope `F`, identically 1 between `inner` and ramping to 0 at
/// `outer`, constant around the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSection {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

/// Deterministic state-family descriptor; the sweep is a pure function of
/// this section and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesSection {
    pub masses: Vec<f64>,
    pub n_max: i64,
    #[serde(default)]
    pub thermal_count: usize,
    #[serde(default)]
    pub beta_range: Option<(f64, f64)>,
    #[serde(default)]
    pub coherent_count: usize,
    #[serde(default)]
    pub amplitude_max: f64,
    #[serde(default)]
    pub particle_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TolerancesSection {
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseSection {
    pub center: (f64, f64),
    pub radius: f64,
    /// Zero-mode amplitude family evaluated at each configured mass.
    pub amplitudes: Vec<f64>,
    /// Constant of the classical-energy link (an equality for coherent
    /// states, so 0 is the honest value).
    #[serde(default)]
    pub c_prop: f64,
    /// When set, replaces the assembled additive constant in the final
    /// inequality; a deliberately wrong value forces a check failure.
    #[serde(default)]
    pub c_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSection {
    /// Symbol orders whose spectral decay slopes are fitted.
    pub orders: Vec<u32>,
    pub slope_tolerance: f64,
    /// Radial cutoff ladder of the cone integrals.
    pub cutoffs: Vec<f64>,
    pub alpha: f64,
    /// Sobolev order used along timelike/spacelike codirections.
    pub nonnull_order: f64,
    /// Sobolev order used along null codirections.
    pub null_order: f64,
    pub mass: f64,
    pub n_max: i64,
    /// Width of the Gaussian localizer around the scan anchor.
    pub localizer_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurSection {
    pub pairs: usize,
    pub size: usize,
    /// Decreasing mollification ladder of the cross-pairing check.
    pub ladder_lambdas: Vec<f64>,
    /// Adds one deliberately indefinite pair to the battery (negative
    /// control; the run must then fail).
    #[serde(default)]
    pub inject_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub grid: GridSection,
    #[serde(default)]
    pub symbol: Option<SymbolSection>,
    #[serde(default)]
    pub test_function: Option<TestFunctionSection>,
    #[serde(default)]
    pub plateau: Option<PlateauSection>,
    #[serde(default)]
    pub states: Option<StatesSection>,
    pub tolerances: TolerancesSection,
    #[serde(default)]
    pub pointwise: Option<PointwiseSection>,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub schur: Option<SchurSection>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| QeiError::InvalidParameter(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            QeiError::InvalidParameter(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(QeiError::InvalidParameter(format!(
                "unsupported config schema version {}",
                self.schema_version
            )));
        }
        if !(self.tolerances.margin > 0.0) {
            return Err(QeiError::InvalidParameter(format!(
                "tolerances.margin must be strictly positive, got {}",
                self.tolerances.margin
            )));
        }
        if let Some(s) = &self.states {
            if s.masses.is_empty() || s.masses.iter().any(|&m| !(m > 0.0)) {
                return Err(QeiError::InvalidParameter(
                    "states.masses must be nonempty and positive".into(),
                ));
            }
            if s.thermal_count > 0 && s.beta_range.is_none() {
                return Err(QeiError::InvalidParameter(
                    "states.beta_range required when thermal_count > 0".into(),
                ));
            }
        }
        if let Some(p) = &self.pointwise {
            if !(p.radius > 0.0) {
                return Err(QeiError::InvalidParameter(
                    "pointwise.radius must be strictly positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: 1,
            grid: GridSection { circumference: 6.5, half_width: 3.6, nt: 64, nx: 64 },
            symbol: Some(SymbolSection { order: 2 }),
            test_function: Some(TestFunctionSection {
                sigma: 0.4,
                inner: (-1.6, 1.6),
                outer: (-2.8, 2.8),
            }),
            plateau: Some(PlateauSection { inner: (-2.8, 2.8), outer: (-3.15, 3.15) }),
            states: Some(StatesSection {
                masses: vec![0.5, 1.0, 2.0],
                n_max: 56,
                thermal_count: 6,
                beta_range: Some((0.5, 5.0)),
                coherent_count: 6,
                amplitude_max: 25.0,
                particle_count: 4,
                seed: 42,
            }),
            tolerances: TolerancesSection { margin: 1e-6 },
            pointwise: None,
            scan: None,
            schur: None,
        }
    }

    #[test]
    fn round_trips_losslessly() {
        let cfg = sample();
        let text = cfg.to_toml();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let mut cfg = sample();
        cfg.tolerances.margin = 0.0;
        let text = cfg.to_toml();
        assert!(matches!(
            ExperimentConfig::parse(&text),
            Err(QeiError::InvalidParameter(_))
        ));
    }

    #[test]
    fn rejects_thermal_without_beta_range() {
        let mut cfg = sample();
        cfg.states.as_mut().unwrap().beta_range = None;
        let text = cfg.to_toml();
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn parse_error_mentions_field() {
        let err = ExperimentConfig::parse("schema_version = \"x\"").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("config parse error"), "{msg}");
    }
}
