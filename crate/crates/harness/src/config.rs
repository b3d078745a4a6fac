//! Experiment configuration: JSON files whose keys mirror these structs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crn_sim::seek::{SeekConfig, SeekMode, DEFAULT_A1, DEFAULT_A2};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which experiment to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Broadcaster counting: one listener, `m` broadcasters on one channel.
    /// The instance is synthesized internally (a single-channel star); the
    /// protocol constants `n_param` and `delta_cap` bound the round lengths.
    Count { m: u32, n_param: u32, delta_cap: u32 },
    /// Full neighbor discovery; success = every node finds exactly its
    /// neighbor set.
    Cseek,
    /// Filtered discovery; success = every node finds all neighbors sharing
    /// at least `k_hat` channels.
    Ckseek { k_hat: u16, delta_khat: Option<u32> },
    /// Global broadcast; success = every node informed.
    Cgcast { source: u32 },
    /// Hitting game with a hidden k-matching.
    GameBipartite {
        c: u16,
        k: u16,
        player: PlayerKind,
        max_rounds: u64,
    },
    /// Hitting game against a hidden maximum matching.
    GameComplete {
        c: u16,
        player: PlayerKind,
        max_rounds: u64,
    },
    /// The discovery-to-game reduction on a two-node instance; success =
    /// the player wins within the discovery budget.
    GameReduction { c: u16, k: u16 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Count { .. } => "count",
            Scenario::Cseek => "cseek",
            Scenario::Ckseek { .. } => "ckseek",
            Scenario::Cgcast { .. } => "cgcast",
            Scenario::GameBipartite { .. } => "game-bipartite",
            Scenario::GameComplete { .. } => "game-complete",
            Scenario::GameReduction { .. } => "game-reduction",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlayerKind {
    Uniform,
    FreshPair,
    Reduction,
}

impl PlayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlayerKind::Uniform => "uniform",
            PlayerKind::FreshPair => "fresh-pair",
            PlayerKind::Reduction => "reduction",
        }
    }
}

/// Channel pool sizes for the random generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSpec {
    /// Explicit pool size.
    Fixed(u32),
    /// `round(factor * c)`; the conventional default is 3c.
    TimesC(f64),
    /// `c^2`, which keeps the overlap distribution self-similar across a
    /// c-sweep (mean pairwise overlap stays 1).
    SquareC,
}

impl PoolSpec {
    pub fn resolve(&self, c: u16) -> u32 {
        match self {
            PoolSpec::Fixed(p) => *p,
            PoolSpec::TimesC(f) => (f * c as f64).round() as u32,
            PoolSpec::SquareC => c as u32 * c as u32,
        }
    }
}

fn default_pool() -> PoolSpec {
    PoolSpec::TimesC(3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorSpec {
    TwoNode {
        c: u16,
        k: u16,
    },
    Star {
        delta: u32,
        c: u16,
        k: u16,
        k_max: u16,
    },
    CompleteTree {
        depth: u32,
        c: u16,
        delta: u32,
    },
    Random {
        n: u32,
        #[serde(default = "default_pool")]
        pool: PoolSpec,
        c: u16,
        k: u16,
        k_max: u16,
        density: f64,
    },
    /// Every node gets `good_deg` neighbors at `good_overlap` shared channels
    /// and `weak_deg` at one shared channel.
    SplitOverlap {
        good_deg: u32,
        good_overlap: u16,
        weak_deg: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceSource {
    /// A fresh instance per trial, seeded from the trial index.
    Generator(GeneratorSpec),
    /// One fixed instance loaded from a file.
    File { path: PathBuf },
}

fn default_a1() -> f64 {
    DEFAULT_A1
}
fn default_a2() -> f64 {
    DEFAULT_A2
}
fn default_count_delta() -> f64 {
    0.5
}
fn default_count_mult() -> u32 {
    8
}
fn default_phase_mult() -> f64 {
    4.0
}

/// Protocol constants hidden behind the asymptotic step counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConstants {
    #[serde(default = "default_a1")]
    pub a1: f64,
    #[serde(default = "default_a2")]
    pub a2: f64,
    #[serde(default = "default_count_delta")]
    pub count_delta: f64,
    #[serde(default = "default_count_mult")]
    pub count_mult: u32,
    #[serde(default = "default_phase_mult")]
    pub phase_mult: f64,
    #[serde(default)]
    pub dissem_rounds: Option<u32>,
}

impl Default for ProtocolConstants {
    fn default() -> Self {
        ProtocolConstants {
            a1: default_a1(),
            a2: default_a2(),
            count_delta: default_count_delta(),
            count_mult: default_count_mult(),
            phase_mult: default_phase_mult(),
            dissem_rounds: None,
        }
    }
}

impl ProtocolConstants {
    pub fn seek_config(&self, mode: SeekMode) -> SeekConfig {
        SeekConfig {
            mode,
            a1: self.a1,
            a2: self.a2,
            count_delta: self.count_delta,
            count_mult: self.count_mult,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_trials() -> u64 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Ignored by the count and game scenarios, which synthesize their own
    /// instances.
    #[serde(default)]
    pub instance: Option<InstanceSource>,
    #[serde(default)]
    pub protocol: ProtocolConstants,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Optional cap on the slots a discovery trial may use before it counts
    /// as failed (cseek/ckseek scenarios; the reported protocol budget is
    /// unchanged).
    #[serde(default)]
    pub slot_budget_cap: Option<u64>,
    /// Success-rate threshold checked by `--assert`.
    #[serde(default)]
    pub assert_success_rate: Option<f64>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials < 1 {
            return Err(ConfigError::Invalid("trials must be >= 1".into()));
        }
        let p = &self.protocol;
        for (name, v) in [
            ("a1", p.a1),
            ("a2", p.a2),
            ("phase_mult", p.phase_mult),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(ConfigError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(p.count_delta > 0.0 && p.count_delta < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "count_delta must be in (0,1), got {}",
                p.count_delta
            )));
        }
        let needs_instance = matches!(
            self.scenario,
            Scenario::Cseek | Scenario::Ckseek { .. } | Scenario::Cgcast { .. }
        );
        if needs_instance && self.instance.is_none() {
            return Err(ConfigError::Invalid(format!(
                "scenario {} needs an instance source",
                self.scenario.name()
            )));
        }
        Ok(())
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_fill_in() {
        let json = r#"{
            "scenario": {"cseek": null},
            "instance": {"generator": {"random": {"n": 8, "c": 4, "k": 1, "k_max": 4, "density": 0.5}}},
            "trials": 3
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.protocol.a1, DEFAULT_A1);
        assert_eq!(cfg.trials, 3);
        match cfg.instance.unwrap() {
            InstanceSource::Generator(GeneratorSpec::Random { pool, .. }) => {
                assert_eq!(pool.resolve(4), 12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig {
            scenario: Scenario::Cseek,
            instance: None,
            protocol: ProtocolConstants::default(),
            trials: 10,
            master_seed: 0,
            slot_budget_cap: None,
            assert_success_rate: None,
            format: OutputFormat::Csv,
        };
        assert!(cfg.validate().is_err()); // missing instance
        cfg.instance = Some(InstanceSource::Generator(GeneratorSpec::TwoNode {
            c: 2,
            k: 1,
        }));
        cfg.validate().unwrap();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        cfg.trials = 1;
        cfg.protocol.a1 = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pool_spec_resolution() {
        assert_eq!(PoolSpec::Fixed(24).resolve(8), 24);
        assert_eq!(PoolSpec::TimesC(3.0).resolve(8), 24);
        assert_eq!(PoolSpec::SquareC.resolve(8), 64);
    }
}
