//! Training configuration shared by the learners and the CLI.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LqError, Result};
use crate::oracle::OracleSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "td0")]
    Td0,
    #[serde(rename = "sarsa0")]
    Sarsa0,
    #[serde(rename = "kf-td0")]
    KfTd0,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Td0 => "td0",
            Algorithm::Sarsa0 => "sarsa0",
            Algorithm::KfTd0 => "kf-td0",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = LqError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td0" => Ok(Algorithm::Td0),
            "sarsa0" => Ok(Algorithm::Sarsa0),
            "kf-td0" => Ok(Algorithm::KfTd0),
            other => Err(LqError::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Base step size `α′_t = a / (b + t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub a: f64,
    pub b: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { a: 1.0, b: 100.0 }
    }
}

/// Gaussian exploration noise with per-episode geometric decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationConfig {
    pub sigma: f64,
    pub decay: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig { sigma: 0.1, decay: 0.999 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub steps: u64,
    pub seed: u64,
    /// `κ` in `Π₀ = κ I` (`Θ₀ = κ I` for Sarsa). When absent it is resolved
    /// to `10 · λ_max(Π*)` from the oracle.
    pub pi0_scale: Option<f64>,
    pub schedule: ScheduleConfig,
    pub exploration: ExplorationConfig,
    /// Episodes restart from a uniform direction scaled to this norm.
    pub restart_radius: f64,
    /// Sarsa only: std of the random first action of each episode. Zero
    /// makes the first action greedy like every other.
    pub start_action_std: f64,
    /// Abort when `‖Π_t‖_F > divergence_ceiling · ‖Π₀‖_F`.
    pub divergence_ceiling: f64,
    /// Write every `metrics_stride`-th step to CSV.
    pub metrics_stride: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            algorithm: Algorithm::Td0,
            steps: 200_000,
            seed: 0,
            pi0_scale: None,
            schedule: ScheduleConfig::default(),
            exploration: ExplorationConfig::default(),
            restart_radius: 2.0,
            start_action_std: 1.0,
            divergence_ceiling: 1e6,
            metrics_stride: 100,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.steps == 0 {
            errs.push("steps must be > 0".to_string());
        }
        if let Some(k) = self.pi0_scale {
            if !(k > 0.0 && k.is_finite()) {
                errs.push(format!("pi0_scale must be > 0, got {k}"));
            }
        }
        if !(self.schedule.a > 0.0 && self.schedule.a.is_finite()) {
            errs.push(format!("schedule.a must be > 0, got {}", self.schedule.a));
        }
        if !(self.schedule.b > 0.0 && self.schedule.b.is_finite()) {
            errs.push(format!("schedule.b must be > 0, got {}", self.schedule.b));
        }
        if !(self.exploration.sigma >= 0.0 && self.exploration.sigma.is_finite()) {
            errs.push(format!("exploration.sigma must be >= 0, got {}", self.exploration.sigma));
        }
        if !(self.exploration.decay > 0.0 && self.exploration.decay <= 1.0) {
            errs.push(format!("exploration.decay must be in (0, 1], got {}", self.exploration.decay));
        }
        if !(self.restart_radius > 0.0 && self.restart_radius.is_finite()) {
            errs.push(format!("restart_radius must be > 0, got {}", self.restart_radius));
        }
        if !(self.start_action_std >= 0.0 && self.start_action_std.is_finite()) {
            errs.push(format!("start_action_std must be >= 0, got {}", self.start_action_std));
        }
        if !(self.divergence_ceiling > 1.0) {
            errs.push(format!("divergence_ceiling must be > 1, got {}", self.divergence_ceiling));
        }
        if self.metrics_stride == 0 {
            errs.push("metrics_stride must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LqError::Config(errs.join("; ")))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainerConfig = toml::from_str(text).map_err(|e| LqError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            key: "config".into(),
            message: e.message().to_string(),
        })?;
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `κ` for the initial estimate: the configured value, or ten times the
    /// largest eigenvalue of `Π*`.
    pub fn resolve_pi0_scale(&self, oracle: Option<&OracleSolution>) -> Result<f64> {
        match (self.pi0_scale, oracle) {
            (Some(k), _) => Ok(k),
            (None, Some(o)) => Ok(10.0 * o.pi_star.max_eigenvalue()),
            (None, None) => Err(LqError::Config(
                "pi0_scale is unset and no oracle solution is available to derive it".into(),
            )),
        }
    }
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_rejected() {
        let cfg = TrainerConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(LqError::Config(m)) if m.contains("steps")));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = TrainerConfig::from_toml("algorithm = \"sarsa0\"\nsteps = 10\n[exploration]\nsigma = 0.0\ndecay = 1.0\n").unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Sarsa0);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.exploration.sigma, 0.0);
        assert_eq!(cfg.schedule, ScheduleConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_reported_with_line() {
        let err = TrainerConfig::from_toml("steps = 10\nbogus = 1\n").unwrap_err();
        match err {
            LqError::Parse { line, .. } => assert_eq!(line, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainerConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
