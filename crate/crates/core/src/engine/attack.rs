use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::Channel;
use crate::error::{Error, Result};
use crate::rng::{trial_rng, Lane};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRule {
    Fixed(Vec<usize>),
    RandomK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    Fixed(usize),
    RandomDistinctFromSeeds,
}

/// Antipacket-style immunization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub activation_time_h: f64,
    pub initial_patched: Vec<usize>,
    pub p_patch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub seeds: SeedRule,
    pub target: TargetRule,
    /// Global timeout; `f64::INFINITY` disables it (serialized as `null`).
    #[serde(
        rename = "timeout_h",
        serialize_with = "ser_hours",
        deserialize_with = "de_hours",
        default = "infinite"
    )]
    pub timeout_h: f64,
    pub p_prox: f64,
    #[serde(default)]
    pub p_social: f64,
    #[serde(default)]
    pub patch: Option<PatchConfig>,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn ser_hours<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_hours<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {p}")))
    }
}

impl AttackConfig {
    /// One random seed, a random distinct target, infection on first contact.
    pub fn single_seed(timeout_h: f64) -> Self {
        Self {
            seeds: SeedRule::RandomK(1),
            target: TargetRule::RandomDistinctFromSeeds,
            timeout_h,
            p_prox: 1.0,
            p_social: 0.0,
            patch: None,
        }
    }

    pub fn with_timeout(&self, timeout_h: f64) -> Self {
        Self {
            timeout_h,
            ..self.clone()
        }
    }

    pub fn with_probabilities(&self, p_prox: f64, p_social: f64) -> Self {
        Self {
            p_prox,
            p_social,
            ..self.clone()
        }
    }

    pub fn probability(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Proximity => self.p_prox,
            Channel::Social => self.p_social,
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        check_probability(self.p_prox, "p_prox")?;
        check_probability(self.p_social, "p_social")?;
        if self.timeout_h.is_nan() || self.timeout_h < 0.0 {
            return Err(Error::config(format!(
                "timeout_h must be >= 0, got {}",
                self.timeout_h
            )));
        }
        let seed_count = match &self.seeds {
            SeedRule::Fixed(ids) => {
                if ids.is_empty() {
                    return Err(Error::config("at least one seed is required"));
                }
                if let Some(&id) = ids.iter().find(|&&id| id >= n_nodes) {
                    return Err(Error::NodeOutOfRange { id, n_nodes });
                }
                let mut sorted = ids.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != ids.len() {
                    return Err(Error::config("duplicate seed ids"));
                }
                ids.len()
            }
            SeedRule::RandomK(k) => {
                if *k == 0 || *k > n_nodes {
                    return Err(Error::config(format!(
                        "random seed count {k} outside [1, {n_nodes}]"
                    )));
                }
                *k
            }
        };
        match self.target {
            TargetRule::Fixed(id) if id >= n_nodes => {
                return Err(Error::NodeOutOfRange { id, n_nodes });
            }
            TargetRule::RandomDistinctFromSeeds if seed_count >= n_nodes => {
                return Err(Error::config("no node left to target after seeding"));
            }
            _ => {}
        }
        if let Some(patch) = &self.patch {
            check_probability(patch.p_patch, "p_patch")?;
            if patch.activation_time_h.is_nan() || patch.activation_time_h < 0.0 {
                return Err(Error::config("patch activation_time_h must be >= 0"));
            }
            if let Some(&id) = patch.initial_patched.iter().find(|&&id| id >= n_nodes) {
                return Err(Error::NodeOutOfRange { id, n_nodes });
            }
        }
        Ok(())
    }

    /// Seeds and target for one trial, drawn from the trial's setup lane.
    pub fn resolve(&self, n_nodes: usize, master_seed: u64, trial_id: u64) -> (Vec<usize>, usize) {
        let mut rng = trial_rng(master_seed, trial_id, Lane::Setup);
        let mut seeds = match &self.seeds {
            SeedRule::Fixed(ids) => ids.clone(),
            SeedRule::RandomK(k) => index::sample(&mut rng, n_nodes, *k).into_vec(),
        };
        seeds.sort_unstable();
        let target = match self.target {
            TargetRule::Fixed(id) => id,
            TargetRule::RandomDistinctFromSeeds => {
                // k-th non-seed node
                let mut k = rng.random_range(0..n_nodes - seeds.len());
                let mut target = 0;
                for node in 0..n_nodes {
                    if seeds.binary_search(&node).is_ok() {
                        continue;
                    }
                    if k == 0 {
                        target = node;
                        break;
                    }
                    k -= 1;
                }
                target
            }
        };
        (seeds, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_target_is_distinct_and_covers_nodes() {
        let cfg = AttackConfig {
            seeds: SeedRule::RandomK(2),
            ..AttackConfig::single_seed(10.0)
        };
        let mut hits = [0u32; 6];
        for trial in 0..3000 {
            let (seeds, target) = cfg.resolve(6, 5, trial);
            assert_eq!(seeds.len(), 2);
            assert!(!seeds.contains(&target));
            hits[target] += 1;
        }
        assert!(hits.iter().all(|&h| h > 350), "{hits:?}");
    }

    #[test]
    fn resolve_is_deterministic() {
        let cfg = AttackConfig::single_seed(1.0);
        assert_eq!(cfg.resolve(50, 1, 2), cfg.resolve(50, 1, 2));
    }

    #[test]
    fn validation() {
        let ok = AttackConfig::single_seed(5.0);
        ok.validate(10).unwrap();
        assert!(ok.with_probabilities(1.5, 0.0).validate(10).is_err());
        assert!(ok.with_timeout(-1.0).validate(10).is_err());
        assert!(AttackConfig {
            seeds: SeedRule::Fixed(vec![]),
            ..ok.clone()
        }
        .validate(10)
        .is_err());
        assert!(AttackConfig {
            seeds: SeedRule::Fixed(vec![12]),
            ..ok.clone()
        }
        .validate(10)
        .is_err());
        assert!(AttackConfig {
            seeds: SeedRule::RandomK(2),
            ..ok.clone()
        }
        .validate(2)
        .is_err());
        assert!(AttackConfig {
            target: TargetRule::Fixed(3),
            seeds: SeedRule::Fixed(vec![3]),
            ..ok
        }
        .validate(10)
        .is_ok());
    }

    #[test]
    fn timeout_serializes_infinite_as_null() {
        let cfg = AttackConfig::single_seed(f64::INFINITY);
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"timeout_h\":null"), "{json}");
        let back: AttackConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.timeout_h, f64::INFINITY);
    }
}
