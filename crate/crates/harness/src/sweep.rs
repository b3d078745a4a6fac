//! Parameter sweeps with log-log slope fits over the per-value medians.

use serde::{Deserialize, Serialize};

use crn_sim::stats::{fit_loglog, SlopeFit};

use crate::config::{ExperimentConfig, GeneratorSpec, InstanceSource, Scenario};
use crate::runner::{run, Execution, HarnessError, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    N,
    C,
    K,
    KHat,
    Delta,
    Diam,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(SweepAxis::N),
            "c" => Ok(SweepAxis::C),
            "k" => Ok(SweepAxis::K),
            "k_hat" | "k-hat" => Ok(SweepAxis::KHat),
            "delta" => Ok(SweepAxis::Delta),
            "diam" => Ok(SweepAxis::Diam),
            other => Err(format!("unknown sweep axis {other:?}")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: u64,
    /// `None` when no valid instance exists at this value (skipped, flagged).
    pub summary: Option<Summary>,
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutput {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log(median slots-to-success)` over
    /// `log(value)`, when at least two points produced summaries.
    pub slope: Option<SlopeFit>,
}

/// Substitutes the axis value into the configuration.
fn apply_axis(
    config: &ExperimentConfig,
    axis: SweepAxis,
    value: u64,
) -> Result<ExperimentConfig, HarnessError> {
    let mut out = config.clone();
    let unsupported = |what: &str| {
        Err(HarnessError::Other(format!(
            "axis {axis:?} does not apply to {what}"
        )))
    };
    if axis == SweepAxis::KHat {
        match &mut out.scenario {
            Scenario::Ckseek { k_hat, .. } => {
                *k_hat = value as u16;
                return Ok(out);
            }
            _ => return unsupported("this scenario (needs ckseek)"),
        }
    }
    let Some(InstanceSource::Generator(spec)) = &mut out.instance else {
        return unsupported("a file-backed instance");
    };
    match (axis, spec) {
        (SweepAxis::N, GeneratorSpec::Random { n, .. }) => *n = value as u32,
        (SweepAxis::C, GeneratorSpec::Random { c, .. }) => *c = value as u16,
        (SweepAxis::C, GeneratorSpec::TwoNode { c, .. }) => *c = value as u16,
        (SweepAxis::C, GeneratorSpec::Star { c, .. }) => *c = value as u16,
        (SweepAxis::C, GeneratorSpec::CompleteTree { c, .. }) => *c = value as u16,
        (SweepAxis::K, GeneratorSpec::Random { k, .. }) => *k = value as u16,
        (SweepAxis::K, GeneratorSpec::TwoNode { k, .. }) => *k = value as u16,
        (SweepAxis::K, GeneratorSpec::Star { k, .. }) => *k = value as u16,
        (SweepAxis::Delta, GeneratorSpec::Star { delta, .. }) => *delta = value as u32,
        (SweepAxis::Delta, GeneratorSpec::CompleteTree { delta, .. }) => *delta = value as u32,
        // The tree's height is the diameter proxy: diam = 2 * depth.
        (SweepAxis::Diam, GeneratorSpec::CompleteTree { depth, .. }) => *depth = value as u32,
        (axis, spec) => {
            return Err(HarnessError::Other(format!(
                "axis {axis:?} does not apply to generator {spec:?}"
            )))
        }
    }
    Ok(out)
}

/// Runs the configured scenario at each axis value and fits the scaling
/// slope over the medians. Values with no feasible instance are skipped and
/// flagged; the fit is refused (with summaries still emitted) when fewer
/// than two points or fewer than the requested values remain meaningful.
pub fn sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[u64],
    execution: Execution,
) -> Result<SweepOutput, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Other("sweep needs at least one value".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let patched = apply_axis(config, axis, value)?;
        match run(&patched, execution) {
            Ok(out) => points.push(SweepPoint {
                value,
                summary: Some(out.summary),
                skipped: None,
            }),
            Err(HarnessError::Topology(e)) => points.push(SweepPoint {
                value,
                summary: None,
                skipped: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| {
            p.summary
                .as_ref()
                .map(|s| (p.value as f64, s.median))
        })
        .collect();
    let slope = if fit_points.len() >= 2 {
        fit_loglog(&fit_points)
    } else {
        None
    };
    Ok(SweepOutput {
        axis,
        points,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{OutputFormat, PoolSpec, ProtocolConstants};

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario::Cseek,
            instance: Some(InstanceSource::Generator(GeneratorSpec::Random {
                n: 6,
                pool: PoolSpec::Fixed(6),
                c: 3,
                k: 1,
                k_max: 3,
                density: 0.8,
            })),
            protocol: ProtocolConstants {
                a1: 3.0,
                a2: 3.0,
                ..Default::default()
            },
            trials: 4,
            master_seed: 7,
            slot_budget_cap: None,
            assert_success_rate: None,
            format: OutputFormat::Csv,
        }
    }

    #[test]
    fn single_value_refuses_fit_but_summarizes() {
        let out = sweep(&base_config(), SweepAxis::C, &[3], Execution::default()).unwrap();
        assert!(out.slope.is_none());
        assert_eq!(out.points.len(), 1);
        assert!(out.points[0].summary.is_some());
    }

    #[test]
    fn infeasible_value_is_skipped_and_flagged() {
        // c larger than the fixed pool cannot generate an instance.
        let out = sweep(&base_config(), SweepAxis::C, &[3, 12], Execution::default()).unwrap();
        assert!(out.points[0].summary.is_some());
        assert!(out.points[1].skipped.is_some());
        assert!(out.slope.is_none());
    }

    #[test]
    fn axis_scenario_mismatch_is_an_error() {
        assert!(sweep(&base_config(), SweepAxis::KHat, &[2], Execution::default()).is_err());
        assert!(sweep(&base_config(), SweepAxis::Delta, &[4], Execution::default()).is_err());
    }
}
