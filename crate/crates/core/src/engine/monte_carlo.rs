use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::attack::AttackConfig;
use super::scenario::Scenario;
use super::trial::{run_trial, TrialOutcome};
use crate::error::{Error, Result};

/// Per-trial row kept by [`MonteCarloSummary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub success: bool,
    pub t_hit_h: Option<f64>,
    pub risk: f64,
    pub ever_infected: usize,
    pub risk_to_timeout: f64,
    pub ever_infected_to_timeout: usize,
}

impl TrialRecord {
    fn from_outcome(trial_id: u64, o: &TrialOutcome) -> Self {
        Self {
            trial_id,
            success: o.success,
            t_hit_h: o.t_hit_h,
            risk: o.risk_time_integral,
            ever_infected: o.ever_infected,
            risk_to_timeout: o.risk_to_timeout,
            ever_infected_to_timeout: o.ever_infected_to_timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Mean of the stopped risk integral.
    pub mean_risk: f64,
    pub mean_ever_infected_fraction: f64,
    pub mean_risk_to_timeout: f64,
    pub mean_ever_infected_fraction_to_timeout: f64,
    pub timeout_h: f64,
    pub records: Vec<TrialRecord>,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    trials: u64,
    success_rate: f64,
    wilson_lo: f64,
    wilson_hi: f64,
    mean_risk: f64,
    mean_ever_infected_fraction: f64,
    mean_risk_to_timeout: f64,
    mean_ever_infected_fraction_to_timeout: f64,
    t_g_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_digest: Option<&'a str>,
}

impl MonteCarloSummary {
    /// Aggregates records in `trial_id` order, so the result does not depend
    /// on how the trials were scheduled.
    pub fn from_records(records: Vec<TrialRecord>, n_nodes: usize, timeout_h: f64) -> Result<Self> {
        let trials = records.len() as u64;
        if trials == 0 {
            return Err(Error::config("at least one trial is required"));
        }
        let successes = records.iter().filter(|r| r.success).count() as u64;
        let (wilson_lo, wilson_hi) = wilson_interval(successes, trials, 0.95)?;
        let t = trials as f64;
        let n = n_nodes as f64;
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(f).sum::<f64>() / t;
        Ok(Self {
            trials,
            successes,
            success_rate: successes as f64 / t,
            wilson_lo,
            wilson_hi,
            mean_risk: mean(&|r| r.risk),
            mean_ever_infected_fraction: mean(&|r| r.ever_infected as f64 / n),
            mean_risk_to_timeout: mean(&|r| r.risk_to_timeout),
            mean_ever_infected_fraction_to_timeout: mean(&|r| {
                r.ever_infected_to_timeout as f64 / n
            }),
            timeout_h,
            records,
        })
    }

    pub fn to_json(&self, config_digest: Option<&str>) -> Result<String> {
        let doc = SummaryDocument {
            trials: self.trials,
            success_rate: self.success_rate,
            wilson_lo: self.wilson_lo,
            wilson_hi: self.wilson_hi,
            mean_risk: self.mean_risk,
            mean_ever_infected_fraction: self.mean_ever_infected_fraction,
            mean_risk_to_timeout: self.mean_risk_to_timeout,
            mean_ever_infected_fraction_to_timeout: self.mean_ever_infected_fraction_to_timeout,
            t_g_h: self.timeout_h.is_finite().then_some(self.timeout_h),
            config_digest,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    /// `trial_id,success,t_hit,risk,ever_infected`
    pub fn write_trials_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "trial_id,success,t_hit,risk,ever_infected")?;
        for r in &self.records {
            let t_hit = r.t_hit_h.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.trial_id,
                u8::from(r.success),
                t_hit,
                r.risk,
                r.ever_infected
            )?;
        }
        Ok(())
    }
}

/// Runs `trials` independent trials with ids `0..trials` on the current rayon
/// pool and returns the outcomes in id order.
pub fn run_trials(
    scenario: &Scenario,
    cfg: &AttackConfig,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    if trials == 0 {
        return Err(Error::config("at least one trial is required"));
    }
    let n_nodes = scenario.n_nodes();
    cfg.validate(n_nodes)?;
    let results: Vec<Result<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|trial_id| {
            let stream = scenario.stream_for_trial(master_seed, trial_id)?;
            run_trial(&stream, cfg, n_nodes, trial_id, master_seed)
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Trial {
                trial_id: i as u64,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn run_monte_carlo(
    scenario: &Scenario,
    cfg: &AttackConfig,
    trials: u64,
    master_seed: u64,
) -> Result<MonteCarloSummary> {
    let outcomes = run_trials(scenario, cfg, trials, master_seed)?;
    let records = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| TrialRecord::from_outcome(i as u64, o))
        .collect();
    MonteCarloSummary::from_records(records, scenario.n_nodes(), cfg.timeout_h)
}

/// Runs every config in `configs` on the same per-trial streams and draws,
/// so outcomes are coupled across configs. One summary per config.
pub fn run_coupled(
    scenario: &Scenario,
    configs: &[AttackConfig],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<MonteCarloSummary>> {
    if trials == 0 {
        return Err(Error::config("at least one trial is required"));
    }
    let n_nodes = scenario.n_nodes();
    for cfg in configs {
        cfg.validate(n_nodes)?;
    }
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..trials)
        .into_par_iter()
        .map(|trial_id| {
            let stream = scenario.stream_for_trial(master_seed, trial_id)?;
            configs
                .iter()
                .map(|cfg| {
                    let o = run_trial(&stream, cfg, n_nodes, trial_id, master_seed)?;
                    Ok(TrialRecord::from_outcome(trial_id, &o))
                })
                .collect()
        })
        .collect();
    let mut columns: Vec<Vec<TrialRecord>> = configs
        .iter()
        .map(|_| Vec::with_capacity(trials as usize))
        .collect();
    for (i, row) in per_trial.into_iter().enumerate() {
        let row = row.map_err(|e| Error::Trial {
            trial_id: i as u64,
            source: Box::new(e),
        })?;
        for (col, rec) in columns.iter_mut().zip(row) {
            col.push(rec);
        }
    }
    columns
        .into_iter()
        .zip(configs)
        .map(|(records, cfg)| MonteCarloSummary::from_records(records, n_nodes, cfg.timeout_h))
        .collect()
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::config("Wilson interval needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::config(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::config(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).clamp(0.0, p)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half).clamp(p, 1.0)
    };
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wilson_examples() {
        assert_eq!(wilson_interval(0, 10, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(10, 10, 0.95).unwrap().1, 1.0);
        // direct evaluation with z = 1.959964
        let z: f64 = 1.959964;
        let (n, p) = (10_000.0, 0.95);
        let d = 1.0 + z * z / n;
        let c = (p + z * z / (2.0 * n)) / d;
        let h = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / d;
        let (lo, hi) = wilson_interval(9500, 10_000, 0.95).unwrap();
        assert_abs_diff_eq!(lo, c - h, epsilon = 1e-7);
        assert_abs_diff_eq!(hi, c + h, epsilon = 1e-7);
        assert_abs_diff_eq!(lo, 0.9455, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 0.9541, epsilon = 1e-4);
        assert!(wilson_interval(0, 0, 0.95).is_err());
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }

    proptest! {
        #[test]
        fn wilson_contains_estimate(trials in 1u64..5000, frac in 0.0..=1.0f64) {
            let successes = (frac * trials as f64).floor() as u64;
            let (lo, hi) = wilson_interval(successes, trials, 0.95).unwrap();
            let p = successes as f64 / trials as f64;
            prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        }
    }
}
