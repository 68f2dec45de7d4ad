//! Synthetic mobility on a wrap-around square and the contact traces it
//! produces.

mod rate;
mod trace;
mod world;

pub use rate::{
    analytic_meeting_rate, estimate_pairwise_meeting_rate, mean_relative_speed,
    MeetingRateEstimate, RWP_OMEGA,
};
pub use trace::{ContactEvent, ContactTrace, Provenance};
pub use world::{generate_contact_trace, MobilityWorld, NodeKinematicState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default detection step: 0.002 h (7.2 s).
pub const DEFAULT_DT_H: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MobilityModel {
    #[serde(rename = "rwp")]
    RandomWaypoint,
    #[serde(rename = "rd")]
    RandomDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub n_nodes: usize,
    pub box_length_km: f64,
    pub radius_km: f64,
    pub v_min_kmh: f64,
    pub v_max_kmh: f64,
    pub model: MobilityModel,
    #[serde(default = "default_dt")]
    pub dt_h: f64,
    pub duration_h: f64,
    pub rng_seed: u64,
}

fn default_dt() -> f64 {
    DEFAULT_DT_H
}

/// The time step is coarse enough that two nodes can pass through each
/// other's range between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityWarning {
    pub step_travel_km: f64,
    pub limit_km: f64,
}

impl std::fmt::Display for FidelityWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "dt*v_max = {:.4} km exceeds r/2 = {:.4} km; contacts may be stepped over",
            self.step_travel_km, self.limit_km
        )
    }
}

impl MobilityConfig {
    /// Parameters of the mobile-network experiment: 100 users, r = 0.1 km,
    /// L = 2.5352 km, speeds uniform on [4, 10] km/h.
    pub fn reference(model: MobilityModel, duration_h: f64, rng_seed: u64) -> Self {
        Self {
            n_nodes: 100,
            box_length_km: 2.5352,
            radius_km: 0.1,
            v_min_kmh: 4.0,
            v_max_kmh: 10.0,
            model,
            dt_h: DEFAULT_DT_H,
            duration_h,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.box_length_km,
            self.radius_km,
            self.v_min_kmh,
            self.v_max_kmh,
            self.dt_h,
            self.duration_h,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mobility configuration"));
        }
        if self.n_nodes < 2 {
            return Err(Error::config(format!(
                "n_nodes must be >= 2, got {}",
                self.n_nodes
            )));
        }
        if !(self.radius_km > 0.0 && self.radius_km < self.box_length_km / 2.0) {
            return Err(Error::config(format!(
                "radius_km must lie in (0, L/2) = (0, {}), got {}",
                self.box_length_km / 2.0,
                self.radius_km
            )));
        }
        if !(self.v_min_kmh > 0.0 && self.v_min_kmh <= self.v_max_kmh) {
            return Err(Error::config(format!(
                "speeds must satisfy 0 < v_min <= v_max, got [{}, {}]",
                self.v_min_kmh, self.v_max_kmh
            )));
        }
        if self.dt_h <= 0.0 {
            return Err(Error::config("dt_h must be positive"));
        }
        if self.duration_h <= 0.0 {
            return Err(Error::config("duration_h must be positive"));
        }
        Ok(())
    }

    pub fn fidelity_warning(&self) -> Option<FidelityWarning> {
        let step_travel_km = self.dt_h * self.v_max_kmh;
        let limit_km = self.radius_km / 2.0;
        (step_travel_km > limit_km).then_some(FidelityWarning {
            step_travel_km,
            limit_km,
        })
    }
}

/// Shortest distance between `p` and `q` over the periodic images of an
/// `L x L` torus.
pub fn toroidal_distance(p: [f64; 2], q: [f64; 2], box_length: f64) -> Result<f64> {
    if !(p.iter().chain(q.iter()).all(|x| x.is_finite()) && box_length.is_finite()) {
        return Err(Error::NonFinite("toroidal_distance input"));
    }
    if box_length <= 0.0 {
        return Err(Error::config("box length must be positive"));
    }
    Ok(toroidal_distance_unchecked(p, q, box_length))
}

#[inline]
pub(crate) fn toroidal_distance_unchecked(p: [f64; 2], q: [f64; 2], box_length: f64) -> f64 {
    let axis = |a: f64, b: f64| {
        let d = (a - b).abs() % box_length;
        d.min(box_length - d)
    };
    axis(p[0], q[0]).hypot(axis(p[1], q[1]))
}
