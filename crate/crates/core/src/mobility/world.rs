use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::trace::{ContactEvent, ContactTrace, Provenance};
use super::{toroidal_distance_unchecked, MobilityConfig, MobilityModel};
use crate::error::Result;

/// Current leg of a node's motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leg {
    /// Straight travel inside the square towards `waypoint`.
    Waypoint { waypoint: [f64; 2] },
    /// Travel along a unit `heading` on the torus for `remaining_km` more.
    Direction {
        heading: [f64; 2],
        remaining_km: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeKinematicState {
    pub position: [f64; 2],
    pub speed_kmh: f64,
    pub leg: Leg,
}

/// Time-stepped mobility simulation for one configuration and seed.
pub struct MobilityWorld {
    cfg: MobilityConfig,
    rng: ChaCha8Rng,
    leg_length: Exp<f64>,
    nodes: Vec<NodeKinematicState>,
    time_h: f64,
}

fn wrap(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    // rem_euclid may round a tiny negative up to exactly l
    if w >= l {
        0.0
    } else {
        w
    }
}

impl MobilityWorld {
    pub fn new(cfg: &MobilityConfig) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.box_length_km;
        let mut world = Self {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            leg_length: Exp::new(2.0 / l).expect("positive rate"),
            nodes: Vec::with_capacity(cfg.n_nodes),
            time_h: 0.0,
        };
        for _ in 0..cfg.n_nodes {
            let position = [world.rng.random::<f64>() * l, world.rng.random::<f64>() * l];
            let (speed_kmh, leg) = world.draw_leg();
            world.nodes.push(NodeKinematicState {
                position,
                speed_kmh,
                leg,
            });
        }
        Ok(world)
    }

    pub fn config(&self) -> &MobilityConfig {
        &self.cfg
    }

    pub fn time_h(&self) -> f64 {
        self.time_h
    }

    pub fn nodes(&self) -> &[NodeKinematicState] {
        &self.nodes
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.nodes.iter().map(|n| n.position)
    }

    fn draw_speed(&mut self) -> f64 {
        if self.cfg.v_min_kmh == self.cfg.v_max_kmh {
            self.cfg.v_min_kmh
        } else {
            self.rng
                .random_range(self.cfg.v_min_kmh..=self.cfg.v_max_kmh)
        }
    }

    fn draw_leg(&mut self) -> (f64, Leg) {
        let speed = self.draw_speed();
        let l = self.cfg.box_length_km;
        let leg = match self.cfg.model {
            MobilityModel::RandomWaypoint => Leg::Waypoint {
                waypoint: [self.rng.random::<f64>() * l, self.rng.random::<f64>() * l],
            },
            MobilityModel::RandomDirection => {
                let theta = self.rng.random::<f64>() * std::f64::consts::TAU;
                Leg::Direction {
                    heading: [theta.cos(), theta.sin()],
                    remaining_km: self.leg_length.sample(&mut self.rng),
                }
            }
        };
        (speed, leg)
    }

    /// Advances every node by `dt_h` hours, drawing new legs as old ones end.
    pub fn advance(&mut self, dt_h: f64) {
        let l = self.cfg.box_length_km;
        for i in 0..self.nodes.len() {
            let mut left_h = dt_h;
            while left_h > 0.0 {
                let node = self.nodes[i];
                let reach_km = node.speed_kmh * left_h;
                match node.leg {
                    Leg::Waypoint { waypoint } => {
                        let dx = waypoint[0] - node.position[0];
                        let dy = waypoint[1] - node.position[1];
                        let dist = dx.hypot(dy);
                        if reach_km < dist {
                            let f = reach_km / dist;
                            self.nodes[i].position =
                                [node.position[0] + f * dx, node.position[1] + f * dy];
                            left_h = 0.0;
                        } else {
                            left_h -= dist / node.speed_kmh;
                            let (speed_kmh, leg) = self.draw_leg();
                            self.nodes[i] = NodeKinematicState {
                                position: waypoint,
                                speed_kmh,
                                leg,
                            };
                        }
                    }
                    Leg::Direction {
                        heading,
                        remaining_km,
                    } => {
                        let step = reach_km.min(remaining_km);
                        let position = [
                            wrap(node.position[0] + heading[0] * step, l),
                            wrap(node.position[1] + heading[1] * step, l),
                        ];
                        if reach_km < remaining_km {
                            self.nodes[i].position = position;
                            self.nodes[i].leg = Leg::Direction {
                                heading,
                                remaining_km: remaining_km - step,
                            };
                            left_h = 0.0;
                        } else {
                            left_h -= remaining_km / node.speed_kmh;
                            let (speed_kmh, leg) = self.draw_leg();
                            self.nodes[i] = NodeKinematicState {
                                position,
                                speed_kmh,
                                leg,
                            };
                        }
                    }
                }
            }
        }
        self.time_h += dt_h;
    }

    /// All pairs `(u, v)`, `u < v`, currently within contact range, sorted.
    pub fn pairs_in_range(&self) -> Vec<(usize, usize)> {
        let l = self.cfg.box_length_km;
        let r = self.cfg.radius_km;
        let cells = ((l / r).floor() as usize).max(1);
        let width = l / cells as f64;
        let cell_of = |p: [f64; 2]| {
            let cx = ((p[0] / width) as usize).min(cells - 1);
            let cy = ((p[1] / width) as usize).min(cells - 1);
            (cx, cy)
        };

        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
        for (i, node) in self.nodes.iter().enumerate() {
            let (cx, cy) = cell_of(node.position);
            buckets[cy * cells + cx].push(i);
        }

        let mut pairs = Vec::new();
        let mut neighbours = Vec::with_capacity(9);
        for (i, node) in self.nodes.iter().enumerate() {
            let (cx, cy) = cell_of(node.position);
            neighbours.clear();
            for dy in [cells - 1, 0, 1] {
                for dx in [cells - 1, 0, 1] {
                    neighbours.push(((cy + dy) % cells) * cells + (cx + dx) % cells);
                }
            }
            neighbours.sort_unstable();
            neighbours.dedup();
            for &cell in &neighbours {
                for &j in &buckets[cell] {
                    if j > i
                        && toroidal_distance_unchecked(node.position, self.nodes[j].position, l)
                            <= r
                    {
                        pairs.push((i, j));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

/// Samples positions every `dt_h` and records maximal in-range intervals.
///
/// A contact opens at the first sample with distance `<= r` and closes at the
/// first later sample with distance `> r`, or at `duration_h`.
pub fn generate_contact_trace(cfg: &MobilityConfig) -> Result<ContactTrace> {
    let mut world = MobilityWorld::new(cfg)?;
    if let Some(w) = cfg.fidelity_warning() {
        log::warn!("{w}");
    }
    let provenance = match cfg.model {
        MobilityModel::RandomWaypoint => Provenance::SyntheticRwp,
        MobilityModel::RandomDirection => Provenance::SyntheticRd,
    };

    let steps = ((cfg.duration_h / cfg.dt_h) - 1e-9).ceil().max(1.0) as u64;
    let mut open: Vec<(usize, usize, f64)> = Vec::new();
    let mut events = Vec::new();

    for step in 0..steps {
        let t = step as f64 * cfg.dt_h;
        let current = world.pairs_in_range();

        let mut next_open = Vec::with_capacity(current.len());
        let (mut a, mut b) = (0, 0);
        while a < open.len() || b < current.len() {
            let o = open.get(a).map(|&(u, v, _)| (u, v));
            let c = current.get(b).copied();
            match (o, c) {
                (Some(op), Some(cp)) if op == cp => {
                    next_open.push(open[a]);
                    a += 1;
                    b += 1;
                }
                (Some(op), Some(cp)) if op < cp => {
                    let (u, v, start) = open[a];
                    events.push(ContactEvent {
                        t_start_h: start,
                        t_end_h: t,
                        u,
                        v,
                    });
                    a += 1;
                }
                (Some(_), None) => {
                    let (u, v, start) = open[a];
                    events.push(ContactEvent {
                        t_start_h: start,
                        t_end_h: t,
                        u,
                        v,
                    });
                    a += 1;
                }
                (_, Some((u, v))) => {
                    next_open.push((u, v, t));
                    b += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        open = next_open;

        let dt = cfg.dt_h.min(cfg.duration_h - t);
        world.advance(dt);
    }
    for (u, v, start) in open {
        events.push(ContactEvent {
            t_start_h: start,
            t_end_h: cfg.duration_h,
            u,
            v,
        });
    }

    ContactTrace::new(events, cfg.n_nodes, cfg.duration_h, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: MobilityModel, seed: u64) -> MobilityConfig {
        MobilityConfig {
            n_nodes: 20,
            box_length_km: 1.0,
            radius_km: 0.1,
            v_min_kmh: 4.0,
            v_max_kmh: 10.0,
            model,
            dt_h: 0.002,
            duration_h: 5.0,
            rng_seed: seed,
        }
    }

    #[test]
    fn grid_matches_all_pairs() {
        for model in [
            MobilityModel::RandomWaypoint,
            MobilityModel::RandomDirection,
        ] {
            let cfg = small(model, 3);
            let mut world = MobilityWorld::new(&cfg).unwrap();
            for _ in 0..200 {
                let pos: Vec<_> = world.positions().collect();
                let mut brute = Vec::new();
                for i in 0..pos.len() {
                    for j in i + 1..pos.len() {
                        if toroidal_distance_unchecked(pos[i], pos[j], 1.0) <= 0.1 {
                            brute.push((i, j));
                        }
                    }
                }
                assert_eq!(world.pairs_in_range(), brute);
                world.advance(0.01);
            }
        }
    }

    #[test]
    fn positions_stay_wrapped_and_speeds_in_range() {
        for model in [
            MobilityModel::RandomWaypoint,
            MobilityModel::RandomDirection,
        ] {
            let cfg = small(model, 9);
            let mut world = MobilityWorld::new(&cfg).unwrap();
            for _ in 0..2000 {
                world.advance(0.002);
                for n in world.nodes() {
                    assert!(n.position.iter().all(|&x| (0.0..1.0).contains(&x)));
                    assert!((4.0..=10.0).contains(&n.speed_kmh));
                }
            }
        }
    }

    #[test]
    fn degenerate_speed_interval() {
        let mut cfg = small(MobilityModel::RandomWaypoint, 1);
        cfg.v_min_kmh = 5.0;
        cfg.v_max_kmh = 5.0;
        let mut world = MobilityWorld::new(&cfg).unwrap();
        for _ in 0..500 {
            world.advance(0.01);
            assert!(world.nodes().iter().all(|n| n.speed_kmh == 5.0));
        }
    }

    #[test]
    fn rd_travels_at_constant_speed() {
        let mut cfg = small(MobilityModel::RandomDirection, 4);
        cfg.v_min_kmh = 6.0;
        cfg.v_max_kmh = 6.0;
        let mut world = MobilityWorld::new(&cfg).unwrap();
        let before: Vec<_> = world.positions().collect();
        world.advance(0.001);
        for (p, q) in before.iter().zip(world.positions()) {
            // a leg change inside the step can only shorten the displacement
            assert!(toroidal_distance_unchecked(*p, q, 1.0) <= 0.006 + 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = small(MobilityModel::RandomWaypoint, 17);
        let a = generate_contact_trace(&cfg).unwrap();
        let b = generate_contact_trace(&cfg).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let mut other = cfg.clone();
        other.rng_seed = 18;
        assert_ne!(
            a.to_csv_string(),
            generate_contact_trace(&other).unwrap().to_csv_string()
        );
    }

    #[test]
    fn far_apart_pair_never_meets() {
        let mut cfg = MobilityConfig {
            n_nodes: 2,
            box_length_km: 2.0,
            radius_km: 0.1,
            v_min_kmh: 0.5,
            v_max_kmh: 0.5,
            model: MobilityModel::RandomDirection,
            dt_h: 0.01,
            duration_h: 0.5,
            rng_seed: 0,
        };
        // Over 0.5 h each node moves 0.25 km, so an initial gap above 0.6 km
        // rules out any contact.
        let seed = (0..1000)
            .find(|&s| {
                cfg.rng_seed = s;
                let w = MobilityWorld::new(&cfg).unwrap();
                let p: Vec<_> = w.positions().collect();
                toroidal_distance_unchecked(p[0], p[1], 2.0) > 0.6
            })
            .unwrap();
        cfg.rng_seed = seed;
        assert!(generate_contact_trace(&cfg).unwrap().is_empty());
    }

    #[test]
    fn contact_bounds_follow_samples() {
        let cfg = small(MobilityModel::RandomDirection, 5);
        let trace = generate_contact_trace(&cfg).unwrap();
        assert!(!trace.is_empty());
        for e in trace.events() {
            let k = e.t_start_h / cfg.dt_h;
            assert!((k - k.round()).abs() < 1e-6);
            assert!(e.t_end_h - e.t_start_h >= cfg.dt_h - 1e-9 || e.t_end_h == cfg.duration_h);
        }
    }
}
