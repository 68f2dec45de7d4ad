//! Mean-field SI/SIS/SIR models, the target-hit probability, the expected
//! risk integral and the analytic optimal timeout.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEP_H: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    pub n: f64,
    /// Per-pair infection rate (1/h).
    pub beta: f64,
    /// Recovery rate (1/h); zero for SI.
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub i0: f64,
}

fn one() -> f64 {
    1.0
}

impl EpidemicParams {
    pub fn new(n: f64, beta: f64, gamma: f64, i0: f64) -> Result<Self> {
        let p = Self { n, beta, gamma, i0 };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `beta = lambda / n`.
    pub fn from_aggregate(n: f64, lambda: f64, gamma: f64, i0: f64) -> Result<Self> {
        Self::new(n, lambda / n, gamma, i0)
    }

    /// Aggregate rate `beta * n`.
    pub fn lambda(&self) -> f64 {
        self.beta * self.n
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.n, self.beta, self.gamma, self.i0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("epidemic parameters must be finite"));
        }
        if self.n < 2.0 {
            return Err(Error::config(format!(
                "population must be >= 2, got {}",
                self.n
            )));
        }
        if self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::config("beta and gamma must be >= 0"));
        }
        if !(self.i0 >= 1.0 && self.i0 < self.n) {
            return Err(Error::config(format!(
                "i0 must satisfy 1 <= i0 < N, got {}",
                self.i0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpidemicModel {
    Si,
    Sis,
    Sir,
}

impl fmt::Display for EpidemicModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpidemicModel::Si => "si",
            EpidemicModel::Sis => "sis",
            EpidemicModel::Sir => "sir",
        })
    }
}

impl FromStr for EpidemicModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "si" => Ok(EpidemicModel::Si),
            "sis" => Ok(EpidemicModel::Sis),
            "sir" => Ok(EpidemicModel::Sir),
            other => Err(Error::config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub model: EpidemicModel,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    /// Probability that the target has been reached by `t`.
    pub p: Vec<f64>,
    pub step_h: f64,
    pub method: &'static str,
}

impl OdeSolution {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `(1/N) * integral of I`, trapezoidal over the grid.
    pub fn risk_integral(&self, n: f64) -> f64 {
        let mut total = 0.0;
        for k in 1..self.t.len() {
            total += 0.5 * (self.i[k] + self.i[k - 1]) * (self.t[k] - self.t[k - 1]);
        }
        total / n
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "t,S,I,R,P")?;
        for k in 0..self.t.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.t[k], self.s[k], self.i[k], self.r[k], self.p[k]
            )?;
        }
        Ok(())
    }
}

/// State `[S, I, R, P]`.
type State = [f64; 4];

fn derivative(params: &EpidemicParams, model: EpidemicModel, x: &State) -> State {
    let [s, i, _, p] = *x;
    let (b, g) = (params.beta, params.gamma);
    let dp = b * i * (1.0 - p);
    match model {
        EpidemicModel::Si => [-b * s * i, b * s * i, 0.0, dp],
        EpidemicModel::Sis => [-b * s * i + g * i, b * s * i - g * i, 0.0, dp],
        EpidemicModel::Sir => [-b * s * i, b * s * i - g * i, g * i, dp],
    }
}

fn rk4_step(params: &EpidemicParams, model: EpidemicModel, x: &State, h: f64) -> State {
    let add = |a: &State, k: &State, c: f64| -> State {
        [
            a[0] + c * k[0],
            a[1] + c * k[1],
            a[2] + c * k[2],
            a[3] + c * k[3],
        ]
    };
    let k1 = derivative(params, model, x);
    let k2 = derivative(params, model, &add(x, &k1, h / 2.0));
    let k3 = derivative(params, model, &add(x, &k2, h / 2.0));
    let k4 = derivative(params, model, &add(x, &k3, h));
    let mut out = *x;
    for j in 0..4 {
        out[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    out
}

fn initial_state(params: &EpidemicParams) -> State {
    [params.n - params.i0, params.i0, 0.0, 0.0]
}

/// Fixed-step RK4 on `[0, horizon_h]`. The last step is shortened so that the
/// grid ends exactly at the horizon.
pub fn solve_epidemic_ode(
    params: &EpidemicParams,
    model: EpidemicModel,
    horizon_h: f64,
    step_h: f64,
) -> Result<OdeSolution> {
    params.validate()?;
    if !(horizon_h.is_finite() && horizon_h > 0.0) {
        return Err(Error::config(format!(
            "horizon must be positive, got {horizon_h}"
        )));
    }
    if !(step_h.is_finite() && step_h > 0.0) {
        return Err(Error::config(format!(
            "step must be positive, got {step_h}"
        )));
    }
    if step_h > horizon_h {
        return Err(Error::config(format!(
            "step {step_h} exceeds horizon {horizon_h}"
        )));
    }
    let steps = (horizon_h / step_h - 1e-9).ceil().max(1.0) as usize;
    let mut sol = OdeSolution {
        model,
        t: Vec::with_capacity(steps + 1),
        s: Vec::with_capacity(steps + 1),
        i: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
        p: Vec::with_capacity(steps + 1),
        step_h,
        method: "rk4",
    };
    let mut x = initial_state(params);
    let push = |sol: &mut OdeSolution, t: f64, x: &State| {
        sol.t.push(t);
        sol.s.push(x[0]);
        sol.i.push(x[1]);
        sol.r.push(x[2]);
        sol.p.push(x[3]);
    };
    push(&mut sol, 0.0, &x);
    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * step_h;
        let t = if k == steps {
            horizon_h
        } else {
            k as f64 * step_h
        };
        x = rk4_step(params, model, &x, t - t_prev);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "ODE state became non-finite at t={t}: {x:?}"
            )));
        }
        push(&mut sol, t, &x);
    }
    Ok(sol)
}

fn require_si(params: &EpidemicParams, what: &str) -> Result<()> {
    params.validate()?;
    if params.gamma != 0.0 {
        return Err(Error::config(format!("{what} needs gamma = 0")));
    }
    Ok(())
}

fn require_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::config(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Expected infected count of the SI model at time `t`.
pub fn si_infected_closed_form(params: &EpidemicParams, t: f64) -> Result<f64> {
    require_si(params, "the SI closed form")?;
    require_time(t)?;
    let (n, i0) = (params.n, params.i0);
    Ok(n * i0 / (i0 + (n - i0) * (-params.lambda() * t).exp()))
}

/// Long-run infected count of the SIS model.
pub fn sis_steady_state(params: &EpidemicParams) -> f64 {
    if params.beta == 0.0 {
        return 0.0;
    }
    (params.n - params.gamma / params.beta).max(0.0)
}

/// Integrates the SIR model (SI when `gamma = 0`) up to exactly `t`.
fn sir_state_at(params: &EpidemicParams, t: f64) -> State {
    let model = if params.gamma == 0.0 {
        EpidemicModel::Si
    } else {
        EpidemicModel::Sir
    };
    let steps = (t / DEFAULT_STEP_H).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut x = initial_state(params);
    for _ in 0..steps {
        x = rk4_step(params, model, &x, h);
    }
    x
}

/// Probability that the target is reached by `t`.
///
/// Closed form when `gamma = 0`, otherwise the SIR ODE.
pub fn target_success_cdf(params: &EpidemicParams, t: f64) -> Result<f64> {
    params.validate()?;
    require_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if params.gamma == 0.0 {
        let (n, i0) = (params.n, params.i0);
        // 1 - N / (N - I0 + I0 e^{Lt}), written to stay finite for large Lt
        let lt = params.lambda() * t;
        let q = n / i0 * (-lt).exp() / (1.0 + (n / i0 - 1.0) * (-lt).exp());
        return Ok((1.0 - q).clamp(0.0, 1.0));
    }
    Ok(sir_state_at(params, t)[3].clamp(0.0, 1.0))
}

/// `(1/N) * integral over [0, T] of I(t)`, ignoring early stopping at the hit.
pub fn expected_risk(params: &EpidemicParams, t: f64) -> Result<f64> {
    params.validate()?;
    require_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let (n, i0) = (params.n, params.i0);
    if params.beta == 0.0 && params.gamma == 0.0 {
        return Ok(i0 * t / n);
    }
    if params.gamma == 0.0 {
        let l = params.lambda();
        let c = (n - i0) / i0;
        return Ok(t + ((c * (-l * t).exp()).ln_1p() - c.ln_1p()) / l);
    }
    let sol = solve_epidemic_ode(params, EpidemicModel::Sir, t, DEFAULT_STEP_H.min(t))?;
    Ok(sol.risk_integral(n))
}

/// Smallest `T` with `target_success_cdf(T) >= rho`.
pub fn optimal_timeout(params: &EpidemicParams, rho: f64) -> Result<f64> {
    params.validate()?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::config(format!(
            "reliability must lie in [0, 1), got {rho}"
        )));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    if params.beta == 0.0 {
        return Err(Error::Unattainable {
            message: "no transmission with beta = 0".into(),
            achieved: 0.0,
        });
    }
    let (n, i0) = (params.n, params.i0);
    if params.gamma == 0.0 {
        return Ok(((n / (1.0 - rho) - (n - i0)) / i0).ln() / params.lambda());
    }

    // march the SIR model until P crosses rho, then bisect inside the step
    let h = DEFAULT_STEP_H;
    let mut x = initial_state(params);
    let mut t = 0.0;
    loop {
        let next = rk4_step(params, EpidemicModel::Sir, &x, h);
        if next[3] >= rho {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if rk4_step(params, EpidemicModel::Sir, &x, mid)[3] >= rho {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(t + hi);
        }
        if next[1] < 1e-12 * n {
            return Err(Error::Unattainable {
                message: format!("success probability saturates below {rho}"),
                achieved: next[3],
            });
        }
        x = next;
        t += h;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fig2() -> EpidemicParams {
        EpidemicParams::from_aggregate(100.0, 0.37043, 0.0, 1.0).unwrap()
    }

    /// Logistic ODE `dI/dt = beta I (N - I)` by RK4 with a tiny step.
    fn logistic_oracle(p: &EpidemicParams, t: f64) -> f64 {
        let steps = 200_000;
        let h = t / steps as f64;
        let f = |i: f64| p.beta * i * (p.n - i);
        let mut i = p.i0;
        for _ in 0..steps {
            let k1 = f(i);
            let k2 = f(i + h / 2.0 * k1);
            let k3 = f(i + h / 2.0 * k2);
            let k4 = f(i + h * k3);
            i += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        i
    }

    fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn si_closed_form() {
        let p = fig2();
        assert_eq!(si_infected_closed_form(&p, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            si_infected_closed_form(&p, 500.0).unwrap(),
            100.0,
            max_relative = 1e-12
        );
        let i10 = si_infected_closed_form(&p, 10.0).unwrap();
        assert_relative_eq!(i10, logistic_oracle(&p, 10.0), max_relative = 1e-6);
        assert_abs_diff_eq!(i10, 29.09, epsilon = 0.01);
        assert!(si_infected_closed_form(&p, -1.0).is_err());
        let sir = EpidemicParams { gamma: 0.1, ..p };
        assert!(si_infected_closed_form(&sir, 1.0).is_err());
    }

    #[test]
    fn rk4_matches_si_closed_form() {
        let p = fig2();
        let sol = solve_epidemic_ode(&p, EpidemicModel::Si, 40.0, DEFAULT_STEP_H).unwrap();
        for (k, &t) in sol.t.iter().enumerate() {
            let exact = si_infected_closed_form(&p, t).unwrap();
            assert_relative_eq!(sol.i[k], exact, max_relative = 1e-6);
            assert_relative_eq!(sol.p[k], target_success_cdf(&p, t).unwrap(), epsilon = 1e-6);
        }
        assert_eq!(*sol.t.last().unwrap(), 40.0);
    }

    #[test]
    fn grid_ends_on_horizon() {
        let sol = solve_epidemic_ode(&fig2(), EpidemicModel::Si, 1.005, 0.01).unwrap();
        assert_eq!(sol.len(), 102);
        assert_eq!(*sol.t.last().unwrap(), 1.005);
        assert!(solve_epidemic_ode(&fig2(), EpidemicModel::Si, 1.0, 2.0).is_err());
        assert!(solve_epidemic_ode(&fig2(), EpidemicModel::Si, 1.0, 0.0).is_err());
    }

    #[test]
    fn sis_behaviour() {
        let sub = EpidemicParams::new(100.0, 0.001, 0.2, 1.0).unwrap();
        let sol = solve_epidemic_ode(&sub, EpidemicModel::Sis, 100.0, 0.01).unwrap();
        assert!(*sol.i.last().unwrap() < 0.01);
        assert_eq!(sis_steady_state(&sub), 0.0);

        let p = EpidemicParams::new(100.0, 0.01, 0.5, 1.0).unwrap();
        assert_eq!(sis_steady_state(&p), 50.0);
        let sol = solve_epidemic_ode(&p, EpidemicModel::Sis, 200.0, 0.01).unwrap();
        assert_abs_diff_eq!(*sol.i.last().unwrap(), 50.0, epsilon = 0.1);
        assert_eq!(sis_steady_state(&EpidemicParams { gamma: 0.0, ..p }), 100.0);
    }

    #[test]
    fn sir_conserves_population() {
        let p = EpidemicParams::new(100.0, 0.004, 0.1, 2.0).unwrap();
        let sol = solve_epidemic_ode(&p, EpidemicModel::Sir, 100.0, 0.01).unwrap();
        for k in 0..sol.len() {
            assert!((sol.s[k] + sol.i[k] + sol.r[k] - 100.0).abs() <= 1e-8 * 100.0);
            assert!((0.0..=1.0).contains(&sol.p[k]));
        }
        assert!(sol.p.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn success_cdf_values() {
        let p = fig2();
        assert_eq!(target_success_cdf(&p, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(target_success_cdf(&p, 10.0).unwrap(), 0.284, epsilon = 1e-3);
        assert_abs_diff_eq!(target_success_cdf(&p, 25.0).unwrap(), 0.991, epsilon = 1e-3);
        assert!(target_success_cdf(&p, 1e6).unwrap() <= 1.0);
        // ODE oracle for the SIR branch with negligible recovery
        let slow = EpidemicParams { gamma: 1e-12, ..p };
        assert_abs_diff_eq!(
            target_success_cdf(&slow, 10.0).unwrap(),
            target_success_cdf(&p, 10.0).unwrap(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn risk_values() {
        let p = fig2();
        assert_eq!(expected_risk(&p, 0.0).unwrap(), 0.0);
        for t in [10.0, 20.0] {
            let sol = solve_epidemic_ode(&p, EpidemicModel::Si, t, 0.001).unwrap();
            assert_relative_eq!(
                expected_risk(&p, t).unwrap(),
                sol.risk_integral(100.0),
                max_relative = 1e-5
            );
        }
        let (r10, r20) = (
            expected_risk(&p, 10.0).unwrap(),
            expected_risk(&p, 20.0).unwrap(),
        );
        assert_abs_diff_eq!(r10, 0.901, epsilon = 0.005);
        assert_abs_diff_eq!(r20, 7.725, epsilon = 0.005);
        assert_abs_diff_eq!(r20 / r10, 8.57, epsilon = 0.02);

        let still = EpidemicParams {
            beta: 0.0,
            i0: 3.0,
            ..p
        };
        assert_relative_eq!(expected_risk(&still, 7.0).unwrap(), 3.0 * 7.0 / 100.0);
    }

    #[test]
    fn sir_risk_matches_quadrature() {
        let p = EpidemicParams::new(100.0, 0.005, 0.05, 1.0).unwrap();
        let fine = solve_epidemic_ode(&p, EpidemicModel::Sir, 30.0, 0.001).unwrap();
        assert_relative_eq!(
            expected_risk(&p, 30.0).unwrap(),
            fine.risk_integral(100.0),
            max_relative = 1e-4
        );
    }

    #[test]
    fn optimal_timeout_against_bisection() {
        let p = fig2();
        assert_eq!(optimal_timeout(&p, 0.0).unwrap(), 0.0);
        for (rho, expected) in [(0.95, 20.382), (0.9, 18.367)] {
            let t = optimal_timeout(&p, rho).unwrap();
            let oracle = bisect(|t| target_success_cdf(&p, t).unwrap(), rho, 0.0, 100.0);
            assert_abs_diff_eq!(t, oracle, epsilon = 1e-9);
            assert_abs_diff_eq!(t, expected, epsilon = 1e-3);
        }
        assert!(optimal_timeout(&p, 1.0).is_err());
        let none = EpidemicParams { beta: 0.0, ..p };
        assert!(matches!(
            optimal_timeout(&none, 0.5),
            Err(Error::Unattainable { .. })
        ));
    }

    #[test]
    fn sir_optimal_timeout() {
        let p = EpidemicParams::new(100.0, 0.005, 0.05, 1.0).unwrap();
        let t = optimal_timeout(&p, 0.5).unwrap();
        let oracle = bisect(|t| target_success_cdf(&p, t).unwrap(), 0.5, 0.0, 200.0);
        assert_abs_diff_eq!(t, oracle, epsilon = 1e-3);
        // recovery fast enough that the outbreak dies out first
        let weak = EpidemicParams::new(100.0, 0.001, 1.0, 1.0).unwrap();
        assert!(matches!(
            optimal_timeout(&weak, 0.9),
            Err(Error::Unattainable { .. })
        ));
    }

    #[test]
    fn validation() {
        assert!(EpidemicParams::new(1.0, 0.1, 0.0, 1.0).is_err());
        assert!(EpidemicParams::new(10.0, 0.1, 0.0, 10.0).is_err());
        assert!(EpidemicParams::new(10.0, -0.1, 0.0, 1.0).is_err());
        assert_eq!("SIR".parse::<EpidemicModel>().unwrap(), EpidemicModel::Sir);
    }
}
