use std::borrow::Cow;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::exposure::{Channel, ExposureEvent, ExposureStream};
use crate::error::{Error, Result};
use crate::mobility::{generate_contact_trace, MobilityConfig};
use crate::rng::scenario_seed;
use crate::traces::{build_exposure_stream, DualPathConfig, SocialGraph};

/// Source of the exposure stream seen by each trial.
#[derive(Debug, Clone)]
pub enum Scenario {
    /// The same stream in every trial.
    Stream {
        stream: ExposureStream,
        n_nodes: usize,
    },
    /// Homogeneous mixing: every unordered pair meets as an independent
    /// Poisson process with rate `pair_rate_h`; a fresh realization per trial.
    Mixing {
        n_nodes: usize,
        pair_rate_h: f64,
        horizon_h: f64,
    },
    /// Synthetic mobility regenerated per trial, optionally with social ties.
    Mobility {
        mobility: MobilityConfig,
        social: Option<SocialGraph>,
        dual: DualPathConfig,
    },
}

impl Scenario {
    pub fn stream(stream: ExposureStream, n_nodes: usize) -> Result<Self> {
        if let Some(id) = stream.max_id().filter(|&id| id >= n_nodes) {
            return Err(Error::NodeOutOfRange { id, n_nodes });
        }
        Ok(Scenario::Stream { stream, n_nodes })
    }

    pub fn mixing(n_nodes: usize, pair_rate_h: f64, horizon_h: f64) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::config("mixing scenario needs at least two nodes"));
        }
        if !(pair_rate_h.is_finite() && pair_rate_h >= 0.0) {
            return Err(Error::config(format!(
                "pair rate must be finite and >= 0, got {pair_rate_h}"
            )));
        }
        if !(horizon_h.is_finite() && horizon_h >= 0.0) {
            return Err(Error::config("horizon_h must be finite and >= 0"));
        }
        Ok(Scenario::Mixing {
            n_nodes,
            pair_rate_h,
            horizon_h,
        })
    }

    pub fn mobility(
        mobility: MobilityConfig,
        social: Option<SocialGraph>,
        dual: DualPathConfig,
    ) -> Result<Self> {
        mobility.validate()?;
        dual.validate()?;
        if let Some(g) = &social {
            if g.n_nodes() != mobility.n_nodes {
                return Err(Error::data(format!(
                    "social graph has {} nodes but mobility has {}",
                    g.n_nodes(),
                    mobility.n_nodes
                )));
            }
        }
        Ok(Scenario::Mobility {
            mobility,
            social,
            dual,
        })
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Scenario::Stream { n_nodes, .. } | Scenario::Mixing { n_nodes, .. } => *n_nodes,
            Scenario::Mobility { mobility, .. } => mobility.n_nodes,
        }
    }

    pub fn horizon_h(&self) -> f64 {
        match self {
            Scenario::Stream { stream, .. } => stream.horizon_h(),
            Scenario::Mixing { horizon_h, .. } => *horizon_h,
            Scenario::Mobility { dual, .. } => dual.horizon_h,
        }
    }

    /// Same scenario without the social channel.
    pub fn proximity_only(&self) -> Self {
        match self {
            Scenario::Stream { stream, n_nodes } => Scenario::Stream {
                stream: stream.restrict(Channel::Proximity),
                n_nodes: *n_nodes,
            },
            Scenario::Mobility { mobility, dual, .. } => Scenario::Mobility {
                mobility: mobility.clone(),
                social: None,
                dual: dual.clone(),
            },
            other => other.clone(),
        }
    }

    /// Exposure stream of trial `trial_id`. Regenerated scenarios derive their
    /// randomness from `(master_seed, trial_id)` only.
    pub fn stream_for_trial(
        &self,
        master_seed: u64,
        trial_id: u64,
    ) -> Result<Cow<'_, ExposureStream>> {
        match self {
            Scenario::Stream { stream, .. } => Ok(Cow::Borrowed(stream)),
            Scenario::Mixing {
                n_nodes,
                pair_rate_h,
                horizon_h,
            } => Ok(Cow::Owned(mixing_stream(
                *n_nodes,
                *pair_rate_h,
                *horizon_h,
                scenario_seed(master_seed, trial_id),
            )?)),
            Scenario::Mobility {
                mobility,
                social,
                dual,
            } => {
                let cfg = MobilityConfig {
                    rng_seed: scenario_seed(master_seed, trial_id),
                    duration_h: mobility.duration_h.max(dual.horizon_h),
                    ..mobility.clone()
                };
                let trace = generate_contact_trace(&cfg)?;
                let graph = match social {
                    Some(g) => Cow::Borrowed(g),
                    None => Cow::Owned(SocialGraph::empty(cfg.n_nodes)),
                };
                Ok(Cow::Owned(build_exposure_stream(&trace, &graph, dual)?))
            }
        }
    }
}

/// Superposed pairwise Poisson meetings. Meeting `i` produces two directed
/// proximity events with keys `2i` and `2i + 1`.
pub(crate) fn mixing_stream(
    n_nodes: usize,
    pair_rate_h: f64,
    horizon_h: f64,
    seed: u64,
) -> Result<ExposureStream> {
    let pairs = (n_nodes * (n_nodes - 1) / 2) as f64;
    let total = pair_rate_h * pairs;
    let mut events = Vec::new();
    if total > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = Exp::new(total).map_err(|e| Error::config(e.to_string()))?;
        let mut t = 0.0;
        let mut i = 0u64;
        loop {
            t += gap.sample(&mut rng);
            if t > horizon_h {
                break;
            }
            let a = rng.random_range(0..n_nodes);
            let mut b = rng.random_range(0..n_nodes - 1);
            if b >= a {
                b += 1;
            }
            for (k, (src, dst)) in [(a, b), (b, a)].into_iter().enumerate() {
                events.push(ExposureEvent {
                    t_h: t,
                    src,
                    dst,
                    channel: Channel::Proximity,
                    event_key: 2 * i + k as u64,
                });
            }
            i += 1;
        }
    }
    ExposureStream::new(events, horizon_h)
}
