//! Searches over the success/exposure tradeoff.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{run_coupled, run_trials, AttackConfig, MonteCarloSummary, Scenario};
use crate::error::{Error, Result};

/// Which per-trial risk a search compares against its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMetric {
    /// Integral stopped at the hit.
    Stopped,
    /// Integral over the whole window up to the timeout.
    #[default]
    UntilTimeout,
}

impl RiskMetric {
    pub fn of(self, summary: &MonteCarloSummary) -> f64 {
        match self {
            RiskMetric::Stopped => summary.mean_risk,
            RiskMetric::UntilTimeout => summary.mean_risk_to_timeout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub tg_h: f64,
    pub success_rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub mean_risk: f64,
    pub mean_risk_to_timeout: f64,
}

impl TradeoffPoint {
    fn from_summary(tg_h: f64, s: &MonteCarloSummary) -> Self {
        Self {
            tg_h,
            success_rate: s.success_rate,
            wilson_lo: s.wilson_lo,
            wilson_hi: s.wilson_hi,
            mean_risk: s.mean_risk,
            mean_risk_to_timeout: s.mean_risk_to_timeout,
        }
    }
}

/// Monte Carlo summary per timeout, with the same trials at every grid point.
pub fn tradeoff_curve(
    scenario: &Scenario,
    cfg: &AttackConfig,
    tg_grid: &[f64],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<TradeoffPoint>> {
    if tg_grid.is_empty() {
        return Err(Error::config("timeout grid is empty"));
    }
    if tg_grid.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::config("timeouts must be >= 0"));
    }
    if tg_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("timeout grid must be strictly increasing"));
    }
    let configs: Vec<_> = tg_grid.iter().map(|&t| cfg.with_timeout(t)).collect();
    let summaries = run_coupled(scenario, &configs, trials, master_seed)?;
    Ok(tg_grid
        .iter()
        .zip(&summaries)
        .map(|(&t, s)| TradeoffPoint::from_summary(t, s))
        .collect())
}

/// `tg,success,wilson_lo,wilson_hi,risk,risk_to_timeout`
pub fn write_tradeoff_csv<W: Write>(
    points: &[TradeoffPoint],
    mut out: W,
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "tg,success,wilson_lo,wilson_hi,risk,risk_to_timeout")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.tg_h, p.success_rate, p.wilson_lo, p.wilson_hi, p.mean_risk, p.mean_risk_to_timeout
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeoutEstimate {
    pub tg_h: f64,
    /// Fraction of trials hit by `tg_h`.
    pub success_rate: f64,
    pub trials: u64,
}

/// Smallest timeout whose empirical success reaches `rho`.
///
/// One pass without a timeout gives every trial's hit time; success at any
/// `T` is the fraction of hit times `<= T`, so the answer is an order
/// statistic.
pub fn min_timeout_mc(
    scenario: &Scenario,
    cfg: &AttackConfig,
    rho: f64,
    trials: u64,
    master_seed: u64,
) -> Result<TimeoutEstimate> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::config(format!(
            "reliability must lie in [0, 1), got {rho}"
        )));
    }
    let outcomes = run_trials(
        scenario,
        &cfg.with_timeout(f64::INFINITY),
        trials,
        master_seed,
    )?;
    let mut hits: Vec<f64> = outcomes.iter().filter_map(|o| o.t_hit_h).collect();
    hits.sort_by(f64::total_cmp);
    let n = trials as f64;
    if rho == 0.0 {
        let at_zero = hits.iter().filter(|&&t| t <= 0.0).count() as f64 / n;
        return Ok(TimeoutEstimate {
            tg_h: 0.0,
            success_rate: at_zero,
            trials,
        });
    }
    let mut k = (rho * n).ceil().max(1.0) as usize;
    while k > 1 && (k - 1) as f64 / n >= rho {
        k -= 1;
    }
    while (k as f64) / n < rho {
        k += 1;
    }
    if k > hits.len() {
        let achieved = hits.len() as f64 / n;
        return Err(Error::Unattainable {
            message: format!(
                "reliability {rho} not reached within horizon {} h",
                scenario.horizon_h()
            ),
            achieved,
        });
    }
    let tg_h = hits[k - 1];
    let success_rate = hits.iter().filter(|&&t| t <= tg_h).count() as f64 / n;
    Ok(TimeoutEstimate {
        tg_h,
        success_rate,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfigCell {
    pub p_s: f64,
    pub p_l: f64,
    pub success_rate: f64,
    pub mean_risk: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSearchResult {
    /// Row-major over the sorted `p_s` grid, then the sorted `p_l` grid.
    pub cells: Vec<ConfigCell>,
    pub best: Option<usize>,
    pub risk_budget: f64,
    pub metric: RiskMetric,
}

impl ConfigSearchResult {
    pub fn best_cell(&self) -> Option<&ConfigCell> {
        self.best.map(|i| &self.cells[i])
    }

    /// `ps,pl,success,risk,feasible`
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "ps,pl,success,risk,feasible")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.p_s,
                c.p_l,
                c.success_rate,
                c.mean_risk,
                u8::from(c.feasible)
            )?;
        }
        Ok(())
    }
}

fn normalized_grid(grid: &[f64], name: &str) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::config(format!("{name} grid is empty")));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::config(format!("{name} value {p} outside [0, 1]")));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Best `(p_s, p_l)` by success rate among cells whose mean risk stays within
/// `risk_budget`. Ties go to lower risk, then to the lexicographically smaller
/// pair. An empty feasible set leaves `best` as `None`.
#[allow(clippy::too_many_arguments)]
pub fn constrained_config_search(
    scenario: &Scenario,
    base: &AttackConfig,
    ps_grid: &[f64],
    pl_grid: &[f64],
    risk_budget: f64,
    metric: RiskMetric,
    trials: u64,
    master_seed: u64,
) -> Result<ConfigSearchResult> {
    if risk_budget.is_nan() || risk_budget < 0.0 {
        return Err(Error::config(format!(
            "risk budget must be >= 0, got {risk_budget}"
        )));
    }
    let ps = normalized_grid(ps_grid, "p_s")?;
    let pl = normalized_grid(pl_grid, "p_l")?;
    let pairs: Vec<(f64, f64)> = ps
        .iter()
        .flat_map(|&s| pl.iter().map(move |&l| (s, l)))
        .collect();
    let configs: Vec<_> = pairs
        .iter()
        .map(|&(s, l)| base.with_probabilities(l, s))
        .collect();
    let summaries = run_coupled(scenario, &configs, trials, master_seed)?;

    let cells: Vec<ConfigCell> = pairs
        .iter()
        .zip(&summaries)
        .map(|(&(p_s, p_l), s)| {
            let mean_risk = metric.of(s);
            ConfigCell {
                p_s,
                p_l,
                success_rate: s.success_rate,
                mean_risk,
                feasible: mean_risk <= risk_budget,
            }
        })
        .collect();

    let best = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.feasible)
        .min_by(|(_, a), (_, b)| {
            b.success_rate
                .total_cmp(&a.success_rate)
                .then(a.mean_risk.total_cmp(&b.mean_risk))
                .then(a.p_s.total_cmp(&b.p_s))
                .then(a.p_l.total_cmp(&b.p_l))
        })
        .map(|(i, _)| i);

    Ok(ConfigSearchResult {
        cells,
        best,
        risk_budget,
        metric,
    })
}
