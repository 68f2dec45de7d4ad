use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use super::trace::ContactTrace;
use super::{MobilityConfig, MobilityModel};
use crate::error::{Error, Result};

/// Spatial correction factor for random waypoint motion in a square.
pub const RWP_OMEGA: f64 = 1.3683;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeetingRateEstimate {
    /// Contact starts per unordered pair per hour.
    pub rate_per_pair_h: f64,
    pub contacts: usize,
    pub pairs: usize,
    pub duration_h: f64,
    /// Mean gap between the end of one contact and the start of the next for
    /// the same pair, over all pairs that met at least twice.
    pub mean_inter_meeting_h: Option<f64>,
    pub inter_meeting_samples: usize,
}

impl MeetingRateEstimate {
    /// Aggregate rate `beta * N`.
    pub fn aggregate_rate_h(&self, n_nodes: usize) -> f64 {
        self.rate_per_pair_h * n_nodes as f64
    }
}

pub fn estimate_pairwise_meeting_rate(trace: &ContactTrace) -> Result<MeetingRateEstimate> {
    let n = trace.n_nodes();
    if trace.duration_h() <= 0.0 {
        return Err(Error::data("zero-duration trace"));
    }
    if n < 2 {
        return Err(Error::data("trace needs at least two nodes"));
    }
    let pairs = n * (n - 1) / 2;
    let contacts = trace.len();

    let mut last_end: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut gap_sum = 0.0;
    let mut gaps = 0usize;
    for e in trace.events() {
        if let Some(end) = last_end.insert(e.pair(), e.t_end_h) {
            gap_sum += e.t_start_h - end;
            gaps += 1;
        }
    }

    Ok(MeetingRateEstimate {
        rate_per_pair_h: contacts as f64 / (pairs as f64 * trace.duration_h()),
        contacts,
        pairs,
        duration_h: trace.duration_h(),
        mean_inter_meeting_h: (gaps > 0).then(|| gap_sum / gaps as f64),
        inter_meeting_samples: gaps,
    })
}

/// Complete elliptic integral of the second kind, `E(k)`, by the AGM.
fn elliptic_e(k: f64) -> f64 {
    if k >= 1.0 {
        return 1.0;
    }
    let mut a = 1.0;
    let mut b = (1.0 - k * k).sqrt();
    let mut sum = 0.5 * k * k;
    let mut weight = 0.5;
    for _ in 0..64 {
        let c = 0.5 * (a - b);
        let mid = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = mid;
        weight *= 2.0;
        sum += weight * c * c;
        if c.abs() < 1e-17 {
            break;
        }
    }
    PI / (2.0 * a) * (1.0 - sum)
}

/// `E|v1 e1 - v2 e2|` for independent uniform headings, averaged over the
/// angle in closed form.
fn relative_speed_given(v1: f64, v2: f64) -> f64 {
    let s = v1 + v2;
    if s == 0.0 {
        return 0.0;
    }
    let k = (2.0 * (v1 * v2).sqrt() / s).min(1.0);
    2.0 / PI * s * elliptic_e(k)
}

/// Mean relative speed between two nodes whose speeds follow the
/// time-stationary leg-speed law on `[v_min, v_max]` (density proportional to
/// `1/v`, since a leg of fixed length lasts `1/v`).
pub fn mean_relative_speed(v_min: f64, v_max: f64) -> f64 {
    if v_min == v_max {
        return relative_speed_given(v_min, v_min);
    }
    // Stationary density ~ 1/v is uniform in log v.
    const POINTS: usize = 256;
    let (lo, hi) = (v_min.ln(), v_max.ln());
    let h = (hi - lo) / POINTS as f64;
    let speeds: Vec<f64> = (0..POINTS)
        .map(|i| (lo + (i as f64 + 0.5) * h).exp())
        .collect();
    let mut acc = 0.0;
    for &a in &speeds {
        for &b in &speeds {
            acc += relative_speed_given(a, b);
        }
    }
    acc / (POINTS * POINTS) as f64
}

/// Predicted per-pair meeting rate `2 * omega * r * E[V*] / L^2`.
pub fn analytic_meeting_rate(cfg: &MobilityConfig) -> Result<f64> {
    cfg.validate()?;
    let omega = match cfg.model {
        MobilityModel::RandomWaypoint => RWP_OMEGA,
        MobilityModel::RandomDirection => 1.0,
    };
    let ev = mean_relative_speed(cfg.v_min_kmh, cfg.v_max_kmh);
    Ok(2.0 * omega * cfg.radius_km * ev / (cfg.box_length_km * cfg.box_length_km))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{ContactEvent, Provenance};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn elliptic_known_values() {
        assert_relative_eq!(elliptic_e(0.0), PI / 2.0, epsilon = 1e-15);
        // E(1/sqrt 2) = 1.3506438810476755
        assert_relative_eq!(
            elliptic_e(0.5f64.sqrt()),
            1.350_643_881_047_675_5,
            epsilon = 1e-12
        );
        assert_relative_eq!(elliptic_e(1.0), 1.0);
    }

    #[test]
    fn relative_speed_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (v1, v2) in [(5.0, 5.0), (4.0, 10.0), (1.0, 7.5)] {
            let n = 400_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let a = rng.random::<f64>() * 2.0 * PI;
                let b = rng.random::<f64>() * 2.0 * PI;
                acc += (v1 * a.cos() - v2 * b.cos()).hypot(v1 * a.sin() - v2 * b.sin());
            }
            assert_relative_eq!(
                relative_speed_given(v1, v2),
                acc / n as f64,
                max_relative = 5e-3
            );
        }
    }

    #[test]
    fn rd_fixed_speed_example() {
        let cfg = MobilityConfig {
            n_nodes: 10,
            box_length_km: 2.0,
            radius_km: 0.1,
            v_min_kmh: 5.0,
            v_max_kmh: 5.0,
            model: MobilityModel::RandomDirection,
            dt_h: 0.002,
            duration_h: 1.0,
            rng_seed: 0,
        };
        assert_relative_eq!(
            mean_relative_speed(5.0, 5.0),
            20.0 / PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            analytic_meeting_rate(&cfg).unwrap(),
            1.0 / PI,
            max_relative = 1e-8
        );

        let mut tiny = cfg;
        tiny.radius_km = 1e-9;
        assert!(analytic_meeting_rate(&tiny).unwrap() < 1e-8);
    }

    #[test]
    fn stationary_speed_mean_against_sampling() {
        // Sample leg speeds uniformly, weight by leg duration 1/v.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draw = |rng: &mut ChaCha8Rng| loop {
            let v: f64 = rng.random_range(4.0..10.0);
            // rejection: accept with probability (4/v)
            if rng.random::<f64>() < 4.0 / v {
                return v;
            }
        };
        let n = 300_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let (v1, v2) = (draw(&mut rng), draw(&mut rng));
            let a = rng.random::<f64>() * 2.0 * PI;
            acc += (v1 - v2 * a.cos()).hypot(v2 * a.sin());
        }
        assert_relative_eq!(
            mean_relative_speed(4.0, 10.0),
            acc / n as f64,
            max_relative = 5e-3
        );
    }

    #[test]
    fn empty_trace_rate_zero() {
        let trace = ContactTrace::empty(5, 10.0, Provenance::Imported).unwrap();
        let est = estimate_pairwise_meeting_rate(&trace).unwrap();
        assert_eq!(est.rate_per_pair_h, 0.0);
        assert_eq!(est.pairs, 10);
        assert!(est.mean_inter_meeting_h.is_none());
    }

    #[test]
    fn inter_meeting_gaps() {
        let events = vec![
            ContactEvent::new(0.0, 1.0, 0, 1).unwrap(),
            ContactEvent::new(3.0, 3.5, 0, 1).unwrap(),
            ContactEvent::new(4.5, 5.0, 0, 1).unwrap(),
        ];
        let trace = ContactTrace::new(events, 2, 10.0, Provenance::Imported).unwrap();
        let est = estimate_pairwise_meeting_rate(&trace).unwrap();
        assert_relative_eq!(est.rate_per_pair_h, 0.3);
        assert_relative_eq!(est.mean_inter_meeting_h.unwrap(), 1.5);
        assert_eq!(est.inter_meeting_samples, 2);
    }
}
