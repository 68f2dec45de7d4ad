use serde::Serialize;

use super::attack::{AttackConfig, PatchConfig};
use super::exposure::{Channel, ExposureStream};
use crate::error::{Error, Result};
use crate::rng::{uniform, Lane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NodeEpidemicState {
    Susceptible,
    Infected { since_h: f64 },
    Removed { at_h: f64 },
}

/// Who infected whom, and over which opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfectionRecord {
    pub node: usize,
    pub t_h: f64,
    /// `None` for seeds.
    pub infector: Option<usize>,
    pub channel: Option<Channel>,
    pub event_key: Option<u64>,
}

/// Compartment counts right after a state change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateCount {
    pub t_h: f64,
    pub susceptible: usize,
    pub infected: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrialOptions {
    pub record_infections: bool,
    pub record_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub t_hit_h: Option<f64>,
    /// `min(t_hit, T_G, horizon)`.
    pub stop_time_h: f64,
    /// `(1/N) * integral of #I over [0, stop_time]`, in hours.
    pub risk_time_integral: f64,
    pub ever_infected: usize,
    /// `min(T_G, horizon)`: when the global timer (or the data) runs out.
    pub end_time_h: f64,
    /// Like `risk_time_integral` but accrued until `end_time` whether or not
    /// the target was reached, as malware persists until the timer fires.
    pub risk_to_timeout: f64,
    pub ever_infected_to_timeout: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infections: Option<Vec<InfectionRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<StateCount>>,
}

pub fn run_trial(
    stream: &ExposureStream,
    cfg: &AttackConfig,
    n_nodes: usize,
    trial_id: u64,
    master_seed: u64,
) -> Result<TrialOutcome> {
    run_trial_with(
        stream,
        cfg,
        n_nodes,
        trial_id,
        master_seed,
        TrialOptions::default(),
    )
}

struct Population {
    states: Vec<NodeEpidemicState>,
    infected_at: Vec<f64>,
    counts: [usize; 3],
    ever: usize,
    trajectory: Option<Vec<StateCount>>,
}

impl Population {
    fn new(n: usize, record: bool) -> Self {
        Self {
            states: vec![NodeEpidemicState::Susceptible; n],
            infected_at: vec![f64::NAN; n],
            counts: [n, 0, 0],
            ever: 0,
            trajectory: record.then(Vec::new),
        }
    }

    fn snapshot(&mut self, t_h: f64) {
        if let Some(traj) = &mut self.trajectory {
            let point = StateCount {
                t_h,
                susceptible: self.counts[0],
                infected: self.counts[1],
                removed: self.counts[2],
            };
            match traj.last_mut() {
                Some(last) if last.t_h == t_h => *last = point,
                _ => traj.push(point),
            }
        }
    }

    fn infect(&mut self, node: usize, t_h: f64) {
        debug_assert!(matches!(self.states[node], NodeEpidemicState::Susceptible));
        self.states[node] = NodeEpidemicState::Infected { since_h: t_h };
        self.infected_at[node] = t_h;
        self.counts[0] -= 1;
        self.counts[1] += 1;
        self.ever += 1;
    }

    fn remove(&mut self, node: usize, t_h: f64) {
        match self.states[node] {
            NodeEpidemicState::Susceptible => self.counts[0] -= 1,
            NodeEpidemicState::Infected { .. } => self.counts[1] -= 1,
            NodeEpidemicState::Removed { .. } => return,
        }
        self.counts[2] += 1;
        self.states[node] = NodeEpidemicState::Removed { at_h: t_h };
    }

    /// `sum over nodes of |[t_inf, t_out) ∩ [0, until]|`.
    fn infected_time(&self, until: f64) -> f64 {
        let mut total = 0.0;
        for (state, &t_inf) in self.states.iter().zip(&self.infected_at) {
            if t_inf.is_nan() || t_inf > until {
                continue;
            }
            let t_out = match *state {
                NodeEpidemicState::Removed { at_h } => at_h,
                _ => f64::INFINITY,
            };
            total += (t_out.min(until) - t_inf).max(0.0);
        }
        total
    }
}

/// Runs one trial.
///
/// Events are processed in stream order up to `min(T_G, horizon)`. An event
/// infects `dst` iff `src` is infected, `dst` is susceptible, and the event's
/// counter-based uniform falls below the channel probability. With a patch
/// configured, removed nodes forward the patch from its activation time on.
/// Propagation always runs to the end time so that both the stopped and the
/// accrue-to-timeout metrics come out of one pass; nothing that happens after
/// the target is hit can change state before it.
pub fn run_trial_with(
    stream: &ExposureStream,
    cfg: &AttackConfig,
    n_nodes: usize,
    trial_id: u64,
    master_seed: u64,
    options: TrialOptions,
) -> Result<TrialOutcome> {
    cfg.validate(n_nodes)?;
    if let Some(id) = stream.max_id().filter(|&id| id >= n_nodes) {
        return Err(Error::NodeOutOfRange { id, n_nodes });
    }

    let (seeds, target) = cfg.resolve(n_nodes, master_seed, trial_id);
    let mut pop = Population::new(n_nodes, options.record_trajectory);
    let mut log = options.record_infections.then(Vec::new);

    for &s in &seeds {
        pop.infect(s, 0.0);
        if let Some(log) = &mut log {
            log.push(InfectionRecord {
                node: s,
                t_h: 0.0,
                infector: None,
                channel: None,
                event_key: None,
            });
        }
    }
    pop.snapshot(0.0);

    let mut t_hit = seeds.contains(&target).then_some(0.0);
    let mut infected_at_hit = t_hit.map(|_| seeds.len());

    let cutoff = cfg.timeout_h.min(stream.horizon_h());
    let mut patch_pending = cfg.patch.as_ref();
    let mut patch_live = false;

    let mut last_t = 0.0;
    for e in stream.events() {
        if e.t_h > cutoff {
            break;
        }
        last_t = e.t_h;
        if let Some(patch) = patch_pending.filter(|p| e.t_h >= p.activation_time_h) {
            activate(&mut pop, patch);
            patch_pending = None;
            patch_live = true;
        }

        match (pop.states[e.src], pop.states[e.dst]) {
            (NodeEpidemicState::Infected { .. }, NodeEpidemicState::Susceptible) => {
                let u = uniform(master_seed, trial_id, e.event_key, Lane::Infection);
                if u < cfg.probability(e.channel) {
                    pop.infect(e.dst, e.t_h);
                    pop.snapshot(e.t_h);
                    if let Some(log) = &mut log {
                        log.push(InfectionRecord {
                            node: e.dst,
                            t_h: e.t_h,
                            infector: Some(e.src),
                            channel: Some(e.channel),
                            event_key: Some(e.event_key),
                        });
                    }
                    if e.dst == target && t_hit.is_none() {
                        t_hit = Some(e.t_h);
                        infected_at_hit = Some(pop.ever);
                    }
                }
            }
            (
                NodeEpidemicState::Removed { .. },
                NodeEpidemicState::Susceptible | NodeEpidemicState::Infected { .. },
            ) if patch_live => {
                let p_patch = cfg.patch.as_ref().map_or(0.0, |p| p.p_patch);
                if uniform(master_seed, trial_id, e.event_key, Lane::Patch) < p_patch {
                    pop.remove(e.dst, e.t_h);
                    pop.snapshot(e.t_h);
                }
            }
            _ => {}
        }
    }

    let end = if cutoff.is_finite() { cutoff } else { last_t };
    if let Some(patch) = patch_pending.filter(|p| p.activation_time_h <= end) {
        activate(&mut pop, patch);
    }

    let stop = t_hit.map_or(end, |t| t.min(end));
    let success = t_hit.is_some_and(|t| t <= cfg.timeout_h);
    let n = n_nodes as f64;
    let ever_infected_to_timeout = pop.ever;
    let ever_infected = if success {
        infected_at_hit.unwrap_or(ever_infected_to_timeout)
    } else {
        ever_infected_to_timeout
    };

    let outcome_core = (pop.infected_time(stop) / n, pop.infected_time(end) / n);

    // Global timer: every carrier self-deletes.
    if cfg.timeout_h <= stream.horizon_h() && cfg.timeout_h.is_finite() {
        let carriers: Vec<usize> = pop
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, NodeEpidemicState::Infected { .. }))
            .map(|(i, _)| i)
            .collect();
        for node in carriers {
            pop.remove(node, cfg.timeout_h);
        }
        pop.snapshot(cfg.timeout_h);
    }

    Ok(TrialOutcome {
        success,
        t_hit_h: t_hit.filter(|_| success),
        stop_time_h: stop,
        risk_time_integral: outcome_core.0,
        ever_infected,
        end_time_h: end,
        risk_to_timeout: outcome_core.1,
        ever_infected_to_timeout,
        infections: log,
        trajectory: pop.trajectory,
    })
}

fn activate(pop: &mut Population, patch: &PatchConfig) {
    let at = patch.activation_time_h;
    for &node in &patch.initial_patched {
        pop.remove(node, at);
    }
    pop.snapshot(at);
}
