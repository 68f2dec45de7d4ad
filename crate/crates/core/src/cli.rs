//! Command-line front end.
//!
//! Every command reads one JSON scenario document, runs to completion in
//! memory and only then writes its outputs (each via a temporary file and a
//! rename). Failures print one JSON line on stderr and exit with 2 (config),
//! 3 (data) or 4 (infeasible request).

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analytic::{optimal_timeout, solve_epidemic_ode, EpidemicModel, EpidemicParams};
use crate::engine::{run_monte_carlo, AttackConfig, ExposureStream, Scenario, SeedRule};
use crate::error::{Error, ErrorKind, Result};
use crate::mobility::{
    analytic_meeting_rate, estimate_pairwise_meeting_rate, generate_contact_trace, MobilityConfig,
};
use crate::optimizer::{
    constrained_config_search, min_timeout_mc, tradeoff_curve, write_tradeoff_csv, RiskMetric,
    TradeoffPoint,
};
use crate::traces::{
    build_exposure_stream, import_contact_csv, import_contact_csv_remapped, import_social_csv,
    import_social_csv_remapped, DualPathConfig, IdMap, SocialGraph, DEFAULT_SOCIAL_SLOT_H,
};

pub const THREADS_ENV: &str = "EPIDEMICA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "epidemica",
    version,
    about = "Transmissive attack simulation and analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic contact trace from a mobility source.
    GenTrace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical meeting rate of a trace, next to the analytic rate.
    EstimateRate {
        #[arg(long)]
        trace: PathBuf,
        /// Mobility config supplying the analytic rate.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Monte Carlo attack summary or timeout sweep.
    Attack(AttackArgs),
    /// Mean-field trajectories and derived quantities.
    Analytic(AnalyticArgs),
    /// Smallest timeout reaching a success probability.
    OptTimeout {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reliability: f64,
    },
    /// Risk-constrained search over (p_s, p_l).
    OptConfig(OptConfigArgs),
    /// Validate a contact CSV and renumber its ids densely.
    ImportTrace(ImportArgs),
    /// Validate a social edge CSV and renumber its ids densely.
    ImportSocial(ImportArgs),
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Single timeout in hours (`inf` disables it).
    #[arg(long, conflicts_with = "tg_grid")]
    pub tg: Option<f64>,
    /// Timeout sweep `start:stop:step`, inclusive.
    #[arg(long)]
    pub tg_grid: Option<String>,
    /// Tradeoff CSV, one row per timeout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary_json: Option<PathBuf>,
    /// Per-trial CSV (single timeout only).
    #[arg(long)]
    pub per_trial: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "si")]
    pub model: EpidemicModel,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = crate::analytic::DEFAULT_STEP_H)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub reliability: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Stopped,
    UntilTimeout,
}

impl From<MetricArg> for RiskMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Stopped => RiskMetric::Stopped,
            MetricArg::UntilTimeout => RiskMetric::UntilTimeout,
        }
    }
}

#[derive(Debug, Args)]
pub struct OptConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma list or `start:stop:step`.
    #[arg(long)]
    pub ps_grid: String,
    #[arg(long)]
    pub pl_grid: String,
    /// Bound on mean normalized risk in hours (`inf` for none).
    #[arg(long, default_value_t = f64::INFINITY)]
    pub risk_budget: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::UntilTimeout)]
    pub risk_metric: MetricArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write `original_id,dense_id`.
    #[arg(long)]
    pub map_out: PathBuf,
    /// Existing mapping to extend, so traces and graphs share ids.
    #[arg(long)]
    pub map_in: Option<PathBuf>,
}

/// Contact source of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceConfig {
    Mobility(MobilityConfig),
    TraceCsv {
        path: PathBuf,
        #[serde(default)]
        n_nodes: Option<usize>,
    },
    /// Homogeneous mixing; give exactly one of the two rates.
    Mixing {
        n_nodes: usize,
        #[serde(default)]
        pair_rate_h: Option<f64>,
        #[serde(default)]
        aggregate_rate_h: Option<f64>,
        horizon_h: f64,
    },
    ExposureCsv {
        path: PathBuf,
        n_nodes: usize,
        horizon_h: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source: SourceConfig,
    #[serde(default)]
    pub social_graph_csv: Option<PathBuf>,
    pub attack: AttackConfig,
    /// When present, its `p_s`/`p_l` replace the attack's channel
    /// probabilities.
    #[serde(default)]
    pub dual_path: Option<DualPathConfig>,
    #[serde(default)]
    pub epidemic: Option<EpidemicParams>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_trials() -> u64 {
    1000
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub digest: String,
    base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ScenarioConfig = serde_json::from_slice(&bytes)?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            digest,
            base_dir,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Attack parameters after applying the dual-path probabilities.
    pub fn attack(&self) -> AttackConfig {
        match &self.config.dual_path {
            Some(d) => self.config.attack.with_probabilities(d.p_l, d.p_s),
            None => self.config.attack.clone(),
        }
    }

    fn dual_for(&self, default_horizon_h: f64) -> DualPathConfig {
        self.config.dual_path.clone().unwrap_or(DualPathConfig {
            p_s: self.config.attack.p_social,
            p_l: self.config.attack.p_prox,
            social_slot_h: DEFAULT_SOCIAL_SLOT_H,
            horizon_h: default_horizon_h,
        })
    }

    fn social_graph(&self, n_nodes: usize) -> Result<Option<SocialGraph>> {
        let Some(p) = &self.config.social_graph_csv else {
            return Ok(None);
        };
        let imported = import_social_csv(open(&self.resolve(p))?, None)?;
        for w in &imported.warnings {
            log::warn!("{}: {w}", p.display());
        }
        if imported.value.n_nodes() > n_nodes {
            return Err(Error::data(format!(
                "social graph references node {} but the contact source has {n_nodes} nodes",
                imported.value.n_nodes() - 1
            )));
        }
        Ok(Some(imported.value.with_n_nodes(n_nodes)?))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        match &self.config.source {
            SourceConfig::Mobility(m) => {
                let dual = self.dual_for(m.duration_h);
                let social = self.social_graph(m.n_nodes)?;
                Scenario::mobility(m.clone(), social, dual)
            }
            SourceConfig::TraceCsv { path, n_nodes } => {
                let imported = import_contact_csv(open(&self.resolve(path))?, *n_nodes)?;
                for w in &imported.warnings {
                    log::warn!("{}: {w}", path.display());
                }
                let trace = imported.value;
                let dual = self.dual_for(trace.duration_h());
                let n = trace.n_nodes();
                let graph = self
                    .social_graph(n)?
                    .unwrap_or_else(|| SocialGraph::empty(n));
                let stream = build_exposure_stream(&trace, &graph, &dual)?;
                Scenario::stream(stream, n)
            }
            SourceConfig::Mixing {
                n_nodes,
                pair_rate_h,
                aggregate_rate_h,
                horizon_h,
            } => {
                let beta = mixing_rate(*n_nodes, *pair_rate_h, *aggregate_rate_h)?;
                if self.config.social_graph_csv.is_some() {
                    return Err(Error::config("a mixing source cannot carry a social graph"));
                }
                Scenario::mixing(*n_nodes, beta, *horizon_h)
            }
            SourceConfig::ExposureCsv {
                path,
                n_nodes,
                horizon_h,
            } => {
                if self.config.social_graph_csv.is_some() {
                    return Err(Error::config(
                        "an exposure stream already fixes its social events",
                    ));
                }
                let stream = ExposureStream::read_csv(open(&self.resolve(path))?, *horizon_h)?;
                Scenario::stream(stream, *n_nodes)
            }
        }
    }

    /// Mean-field parameters: the `epidemic` section, or else derived from a
    /// mixing or mobility source.
    pub fn epidemic_params(&self) -> Result<EpidemicParams> {
        if let Some(p) = self.config.epidemic {
            p.validate()?;
            return Ok(p);
        }
        let i0 = match &self.config.attack.seeds {
            SeedRule::Fixed(ids) => ids.len(),
            SeedRule::RandomK(k) => *k,
        } as f64;
        match &self.config.source {
            SourceConfig::Mixing {
                n_nodes,
                pair_rate_h,
                aggregate_rate_h,
                ..
            } => {
                let beta = mixing_rate(*n_nodes, *pair_rate_h, *aggregate_rate_h)?;
                EpidemicParams::new(*n_nodes as f64, beta, 0.0, i0)
            }
            SourceConfig::Mobility(m) => {
                let beta = analytic_meeting_rate(m)?;
                EpidemicParams::new(m.n_nodes as f64, beta, 0.0, i0)
            }
            _ => Err(Error::config(
                "this source needs an explicit `epidemic` section",
            )),
        }
    }

    fn header(&self, command: &str) -> String {
        format!(
            "epidemica {} {command}\nconfig_sha256 {}",
            env!("CARGO_PKG_VERSION"),
            self.digest
        )
    }
}

fn mixing_rate(n_nodes: usize, pair: Option<f64>, aggregate: Option<f64>) -> Result<f64> {
    match (pair, aggregate) {
        (Some(b), None) => Ok(b),
        (None, Some(l)) => {
            let beta = l / n_nodes as f64;
            log::info!(
                "aggregate rate {l}/h read as beta*N: per-pair beta = {beta}/h \
                 (read as per-pair it would give beta*N = {}/h)",
                l * n_nodes as f64
            );
            Ok(beta)
        }
        _ => Err(Error::config(
            "mixing source needs exactly one of pair_rate_h, aggregate_rate_h",
        )),
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::config(format!("cannot parse grid {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && b >= a) {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|k| a + k as f64 * step).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.0.push((path.to_path_buf(), bytes));
    }

    fn commit(self) -> Result<()> {
        let mut staged = Vec::new();
        for (path, bytes) in &self.0 {
            let name = path
                .file_name()
                .ok_or_else(|| Error::config("output path has no file name"))?;
            let mut tmp_name = OsString::from(".");
            tmp_name.push(name);
            tmp_name.push(format!(".tmp{}", std::process::id()));
            let tmp = path.with_file_name(tmp_name);
            if let Err(e) = fs::write(&tmp, bytes) {
                for t in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(e.into());
            }
            staged.push(tmp);
        }
        for (tmp, (path, _)) in staged.iter().zip(&self.0) {
            fs::rename(tmp, path)?;
        }
        Ok(())
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_line(value: &serde_json::Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Runs a parsed command; returns what to print on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let mut outputs = Outputs::default();
    let stdout = match &cli.command {
        Command::GenTrace { config, out } => {
            let loaded = LoadedConfig::load(config)?;
            let SourceConfig::Mobility(m) = &loaded.config.source else {
                return Err(Error::config("gen-trace needs a mobility source"));
            };
            let trace = generate_contact_trace(m)?;
            let comment = format!(
                "{}\nprovenance {}",
                loaded.header("gen-trace"),
                trace.provenance()
            );
            outputs.add(out, csv_bytes(|b| trace.write_csv(b, Some(&comment)))?);
            json_line(&json!({
                "contacts": trace.len(),
                "n_nodes": trace.n_nodes(),
                "duration_h": trace.duration_h(),
                "provenance": trace.provenance().to_string(),
            }))?
        }
        Command::EstimateRate { trace, config } => {
            let t = import_contact_csv(open(trace)?, None)?.value;
            let est = estimate_pairwise_meeting_rate(&t)?;
            let analytic = match config {
                Some(c) => match &LoadedConfig::load(c)?.config.source {
                    SourceConfig::Mobility(m) => Some(analytic_meeting_rate(m)?),
                    _ => return Err(Error::config("estimate-rate needs a mobility config")),
                },
                None => None,
            };
            let n = t.n_nodes() as f64;
            json_line(&json!({
                "empirical_rate_per_pair_h": est.rate_per_pair_h,
                "analytic_rate_per_pair_h": analytic,
                "empirical_aggregate_rate_h": est.rate_per_pair_h * n,
                "analytic_aggregate_rate_h": analytic.map(|b| b * n),
                "contacts": est.contacts,
                "pairs": est.pairs,
                "duration_h": est.duration_h,
                "mean_inter_meeting_h": est.mean_inter_meeting_h,
                "inter_meeting_samples": est.inter_meeting_samples,
            }))?
        }
        Command::Attack(args) => attack(args, &mut outputs)?,
        Command::Analytic(args) => {
            let loaded = LoadedConfig::load(&args.config)?;
            let p = loaded.epidemic_params()?;
            let sol = solve_epidemic_ode(&p, args.model, args.horizon, args.step)?;
            if let Some(out) = &args.out {
                let comment = format!(
                    "{}\nmodel {} step_h {}",
                    loaded.header("analytic"),
                    args.model,
                    args.step
                );
                outputs.add(out, csv_bytes(|b| sol.write_csv(b, Some(&comment)))?);
            }
            let optimal = args
                .reliability
                .map(|rho| optimal_timeout(&p, rho))
                .transpose()?;
            json_line(&json!({
                "model": args.model,
                "n": p.n,
                "beta": p.beta,
                "gamma": p.gamma,
                "i0": p.i0,
                "lambda": p.lambda(),
                "horizon_h": args.horizon,
                "infected_at_horizon": sol.i.last(),
                "success_at_horizon": sol.p.last(),
                "risk_at_horizon": sol.risk_integral(p.n),
                "reliability": args.reliability,
                "optimal_timeout_h": optimal,
            }))?
        }
        Command::OptTimeout {
            config,
            reliability,
        } => {
            let loaded = LoadedConfig::load(config)?;
            let scenario = loaded.scenario()?;
            let c = &loaded.config;
            let mc = min_timeout_mc(
                &scenario,
                &loaded.attack(),
                *reliability,
                c.trials,
                c.master_seed,
            )?;
            let analytic = match loaded.epidemic_params() {
                Ok(p) => match optimal_timeout(&p, *reliability) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        log::warn!("analytic timeout unavailable: {e}");
                        None
                    }
                },
                Err(e) => {
                    log::warn!("analytic timeout unavailable: {e}");
                    None
                }
            };
            json_line(&json!({
                "reliability": reliability,
                "mc_tg_h": mc.tg_h,
                "mc_success_rate": mc.success_rate,
                "trials": mc.trials,
                "analytic_tg_h": analytic,
                "config_digest": loaded.digest,
            }))?
        }
        Command::OptConfig(args) => {
            let loaded = LoadedConfig::load(&args.config)?;
            let scenario = loaded.scenario()?;
            let c = &loaded.config;
            let result = constrained_config_search(
                &scenario,
                &loaded.attack(),
                &parse_grid(&args.ps_grid)?,
                &parse_grid(&args.pl_grid)?,
                args.risk_budget,
                args.risk_metric.into(),
                c.trials,
                c.master_seed,
            )?;
            if let Some(out) = &args.out {
                let comment = format!(
                    "{}\nrisk_budget_h {} metric {:?}",
                    loaded.header("opt-config"),
                    args.risk_budget,
                    result.metric
                );
                outputs.add(out, csv_bytes(|b| result.write_csv(b, Some(&comment)))?);
            }
            json_line(&json!({
                "risk_budget_h": if args.risk_budget.is_finite() { Some(args.risk_budget) } else { None },
                "metric": result.metric,
                "feasible_cells": result.cells.iter().filter(|c| c.feasible).count(),
                "best": result.best_cell(),
                "config_digest": loaded.digest,
            }))?
        }
        Command::ImportTrace(args) => {
            let map_in = args
                .map_in
                .as_deref()
                .map(|p| IdMap::read_csv(open(p)?))
                .transpose()?;
            let (imported, map) = import_contact_csv_remapped(open(&args.input)?, map_in)?;
            for w in &imported.warnings {
                log::warn!("{}: {w}", args.input.display());
            }
            let trace = imported.value;
            outputs.add(
                &args.out,
                csv_bytes(|b| trace.write_csv(b, Some("provenance imported")))?,
            );
            outputs.add(&args.map_out, csv_bytes(|b| map.write_csv(b, None))?);
            json_line(&json!({
                "contacts": trace.len(),
                "n_nodes": trace.n_nodes(),
                "duration_h": trace.duration_h(),
                "warnings": imported.warnings,
            }))?
        }
        Command::ImportSocial(args) => {
            let map_in = args
                .map_in
                .as_deref()
                .map(|p| IdMap::read_csv(open(p)?))
                .transpose()?;
            let (imported, map) = import_social_csv_remapped(open(&args.input)?, map_in)?;
            for w in &imported.warnings {
                log::warn!("{}: {w}", args.input.display());
            }
            let graph = imported.value;
            outputs.add(&args.out, csv_bytes(|b| graph.write_csv(b, None))?);
            outputs.add(&args.map_out, csv_bytes(|b| map.write_csv(b, None))?);
            json_line(&json!({
                "edges": graph.edges().len(),
                "n_nodes": graph.n_nodes(),
                "warnings": imported.warnings,
            }))?
        }
    };
    outputs.commit()?;
    Ok(stdout)
}

fn attack(args: &AttackArgs, outputs: &mut Outputs) -> Result<String> {
    let loaded = LoadedConfig::load(&args.config)?;
    let scenario = loaded.scenario()?;
    let cfg = loaded.attack();
    let (trials, seed) = (loaded.config.trials, loaded.config.master_seed);
    let header = loaded.header("attack");

    let grid = match (&args.tg, &args.tg_grid) {
        (_, Some(g)) => parse_grid(g)?,
        (Some(t), None) => vec![*t],
        (None, None) => vec![cfg.timeout_h],
    };
    if grid.len() == 1 {
        let summary = run_monte_carlo(&scenario, &cfg.with_timeout(grid[0]), trials, seed)?;
        let json = summary.to_json(Some(&loaded.digest))?;
        if let Some(p) = &args.summary_json {
            outputs.add(p, json.clone().into_bytes());
        }
        if let Some(p) = &args.per_trial {
            outputs.add(
                p,
                csv_bytes(|b| summary.write_trials_csv(b, Some(&header)))?,
            );
        }
        if let Some(p) = &args.out {
            let point = TradeoffPoint {
                tg_h: grid[0],
                success_rate: summary.success_rate,
                wilson_lo: summary.wilson_lo,
                wilson_hi: summary.wilson_hi,
                mean_risk: summary.mean_risk,
                mean_risk_to_timeout: summary.mean_risk_to_timeout,
            };
            outputs.add(
                p,
                csv_bytes(|b| write_tradeoff_csv(&[point], b, Some(&header)))?,
            );
        }
        return Ok(json);
    }
    if args.per_trial.is_some() || args.summary_json.is_some() {
        return Err(Error::config(
            "--per-trial and --summary-json need a single --tg",
        ));
    }
    let points = tradeoff_curve(&scenario, &cfg, &grid, trials, seed)?;
    if let Some(p) = &args.out {
        outputs.add(
            p,
            csv_bytes(|b| write_tradeoff_csv(&points, b, Some(&header)))?,
        );
    }
    json_line(&serde_json::to_value(&points)?)
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Infeasible => 4,
    }
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::config(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn report(e: &Error) -> i32 {
    let kind = e.kind();
    let mut line = json!({
        "error": match kind {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Infeasible => "infeasible",
        },
        "message": e.to_string(),
    });
    if let Error::Unattainable { achieved, .. } = e {
        line["achieved"] = json!(achieved);
    }
    eprintln!("{line}");
    exit_code(kind)
}

/// Parses `std::env::args`, runs the command and returns the exit status.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(t) => t,
        Err(e) => return report(&e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return report(&Error::config(format!("cannot start thread pool: {e}"))),
    };
    match pool.install(|| run(&cli)) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return 3;
            }
            0
        }
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("10:25:5").unwrap(), vec![10.0, 15.0, 20.0, 25.0]);
        assert_eq!(parse_grid("0:0.3:0.1").unwrap().len(), 4);
        assert_eq!(parse_grid("0.05, 0.1").unwrap(), vec![0.05, 0.1]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn config_parses() {
        let text = r#"{
            "source": {"mixing": {"n_nodes": 100, "aggregate_rate_h": 0.37043, "horizon_h": 30}},
            "attack": {"seeds": {"random_k": 1}, "target": "random_distinct_from_seeds",
                       "timeout_h": 10, "p_prox": 1.0},
            "trials": 10, "master_seed": 3
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(cfg.source, SourceConfig::Mixing { .. }));
        let bad = text.replace("\"trials\"", "\"trails\"");
        assert!(serde_json::from_str::<ScenarioConfig>(&bad).is_err());
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(Error::config("x").kind()), 2);
        assert_eq!(exit_code(Error::data("x").kind()), 3);
        let inf = Error::Unattainable {
            message: "x".into(),
            achieved: 0.1,
        };
        assert_eq!(exit_code(inf.kind()), 4);
    }
}
