//! Run configuration: one JSON document, overridable from the command line.

use std::path::{Path, PathBuf};

use antonov::dynamics::InitialData;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    Polytrope { k: f64 },
    King,
    /// Synthetic quadratic well U₀ = ω²x²/2 with no self-consistency.
    Harmonic { omega: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub points: usize,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub threshold: f64,
    pub refine: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            points: 80,
            gamma_min: None,
            gamma_max: None,
            threshold: 1e-2,
            refine: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Defaults to half the recurrence guard.
    pub horizon: Option<f64>,
    pub n_time: usize,
    pub nx: usize,
    pub initial: InitialData,
    /// Project the initial data onto the a.c. surrogate before evolving.
    pub project_ac: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            n_time: 2048,
            nx: antonov::dynamics::DEFAULT_NX,
            initial: InitialData::default(),
            project_ac: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    /// Central depth h; ignored when `target_mass` is set.
    pub depth: f64,
    pub target_mass: Option<f64>,
    pub tol: f64,
    pub lmax: usize,
    pub n_energy: usize,
    pub n_beta: usize,
    /// Energy margins δ_lo = δ_hi, relative to E₀ − E_min.
    pub delta_rel: f64,
    /// γ-grid clearance from band edges, relative to the band-union width.
    pub edge_margin_rel: f64,
    pub r_excl_spacings: f64,
    pub r_embedded_rel: f64,
    pub amplification_max: f64,
    /// Chart energies written by `steady`.
    pub chart_points: usize,
    pub scan: ScanConfig,
    pub evolve: EvolveConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Polytrope { k: 1.0 },
            depth: 1.0,
            target_mass: None,
            tol: 1e-10,
            lmax: 6,
            n_energy: 128,
            n_beta: 256,
            delta_rel: 1e-4,
            edge_margin_rel: 1e-3,
            r_excl_spacings: 2.0,
            r_embedded_rel: 1e-3,
            amplification_max: 1e8,
            chart_points: 64,
            scan: ScanConfig::default(),
            evolve: EvolveConfig::default(),
            output_dir: PathBuf::from("antonov-out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Domain(format!("invalid config {}: {e}", p.display())))
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Domain(m.to_string()));
        match self.profile {
            Profile::Polytrope { k } if !(k >= 1.0) => return bad("polytropic exponent must satisfy k >= 1"),
            Profile::Harmonic { omega } if !(omega > 0.0) => return bad("omega must be positive"),
            _ => {}
        }
        match self.target_mass {
            Some(m) if !(m > 0.0) => return bad("target mass must be positive"),
            None if !(self.depth > 0.0) => return bad("depth must be positive"),
            _ => {}
        }
        let positive = [
            self.tol,
            self.edge_margin_rel,
            self.r_excl_spacings,
            self.r_embedded_rel,
            self.amplification_max,
            self.scan.threshold,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("all tolerances must be positive");
        }
        if self.lmax < 1 {
            return bad("lmax must be at least 1");
        }
        if self.n_energy < 2 || self.chart_points < 1 {
            return bad("grid sizes must be positive");
        }
        if !(self.delta_rel > 0.0 && self.delta_rel < 0.5) {
            return bad("energy margins must lie inside (0, E0 - Emin)");
        }
        if self.evolve.n_time < 2 || self.evolve.nx < 2 {
            return bad("evolution grids need at least two points");
        }
        if let Some(h) = self.evolve.horizon {
            if !(h > 0.0) {
                return bad("evolution horizon must be positive");
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of `value`, salted with the command and library version.
    pub fn hash_of<T: Serialize>(command: &str, value: &T) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(serde_json::to_vec(value).expect("config serializes"));
        format!("{:x}", h.finalize())
    }

    /// Fields that determine the steady state.
    pub fn steady_key(&self) -> String {
        Self::hash_of(
            "steady-state",
            &(self.profile, self.depth, self.target_mass, self.tol),
        )
    }

    /// Hash of every field except the output directory.
    pub fn run_key(&self, command: &str) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Self::hash_of(command, &c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.run_key("steady"), c.run_key("steady"));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"profile": {"kind": "king"}, "lmax": 3, "evolve": {"n_time": 64}}"#).unwrap();
        assert_eq!(c.profile, Profile::King);
        assert_eq!(c.lmax, 3);
        assert_eq!(c.evolve.n_time, 64);
        assert_eq!(c.n_energy, 128);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"lmaxx": 3}"#).is_err());
    }

    #[test]
    fn invalid_values_are_domain_errors() {
        let mut c = RunConfig {
            depth: 0.0,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().to_string(), "depth must be positive");
        c.depth = 1.0;
        c.delta_rel = 0.7;
        assert!(matches!(c.validate(), Err(CliError::Domain(_))));
        c.delta_rel = 1e-4;
        c.tol = 0.0;
        assert!(matches!(c.validate(), Err(CliError::Domain(_))));
    }

    #[test]
    fn output_dir_does_not_change_keys() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..Default::default()
        };
        assert_eq!(a.run_key("bands"), b.run_key("bands"));
        assert_ne!(a.run_key("bands"), a.run_key("modes"));
        let c = RunConfig {
            lmax: 4,
            ..Default::default()
        };
        assert_eq!(a.steady_key(), c.steady_key());
        assert_ne!(a.run_key("bands"), c.run_key("bands"));
    }
}
