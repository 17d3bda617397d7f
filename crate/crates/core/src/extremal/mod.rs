//! Optimal (most-likely) trajectories of the monitored system.
//!
//! The stochastic Hamiltonian is
//! `ℋ = p·F(q, s) − (λ² + ε²)/2Γ − (1/2τ)(r² + w² − 2r r̄ − 2w w̄ + 2)`
//! with `r̄ = 1 − 2α² − 2γ²`, `w̄ = 1 − 2c² − 2γ²` and `F` the drift driven by
//! the controls `s = (r, w, ε, λ)`. Paths carry weight `e^{−S}` with
//! `S = ∫ (p·q̇ − ℋ) dt`, which on shell is the integral of [`control_cost`].

mod classify;
mod global;
mod shooting;

pub use classify::{action_along, classify_extremum, path_cost, Classification, ClassificationReport, PerturbationOptions};
pub use global::{
    classify_global, detect_global_transition, global_optimum_flow, global_optimum_flow_with,
    global_optimum_velocity, GlobalClass, GlobalClassification, GlobalOptions, StatePath, TransitionEstimate,
};
pub use shooting::{shoot_to_boundary, shoot_with, BoundaryTarget, ShootingOptions, ShootingSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kraus::SimParams;
use crate::ode::{integrate, OdeOptions};
use crate::sde::{eps_direction, lambda_direction, Vec4};
use crate::state::{PureStateReal4, Z1, Z2};

/// Momentum magnitude beyond which an extremal integration is abandoned.
pub const P_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: PureStateReal4,
    pub p: Vec4,
}

impl PhasePoint {
    pub fn new(q: PureStateReal4, p: Vec4) -> Self {
        Self { q, p }
    }

    pub fn to_array(&self) -> [f64; 8] {
        let q = self.q.to_array();
        std::array::from_fn(|i| if i < 4 { q[i] } else { self.p[i - 4] })
    }

    pub fn from_array(x: &[f64; 8]) -> Self {
        Self {
            q: PureStateReal4::new(x[0], x[1], x[2], x[3]),
            p: [x[4], x[5], x[6], x[7]],
        }
    }

    pub fn p_norm(&self) -> f64 {
        self.p.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StochasticControls {
    pub r: f64,
    pub w: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

impl StochasticControls {
    pub fn to_array(self) -> Vec4 {
        [self.r, self.w, self.epsilon, self.lambda]
    }

    pub fn from_array(s: Vec4) -> Self {
        Self {
            r: s[0],
            w: s[1],
            epsilon: s[2],
            lambda: s[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalTrajectory {
    pub times: Vec<f64>,
    pub phase_points: Vec<PhasePoint>,
    pub controls: Vec<StochasticControls>,
    /// Action integrand [`control_cost`] at each recorded point.
    pub integrand: Vec<f64>,
    pub action: f64,
}

impl ExtremalTrajectory {
    pub fn states(&self) -> impl Iterator<Item = PureStateReal4> + '_ {
        self.phase_points.iter().map(|x| x.q)
    }

    pub fn concurrence_sq(&self) -> Vec<f64> {
        self.states().map(|q| crate::state::concurrence_sq(&q)).collect()
    }
}

/// Mean readouts `(r̄, w̄)` in the sign convention of the extremal equations.
pub fn mean_readouts(q: &PureStateReal4) -> (f64, f64) {
    let (al2, c2, g2) = (q.alpha * q.alpha, q.c * q.c, q.gamma * q.gamma);
    (1.0 - 2.0 * al2 - 2.0 * g2, 1.0 - 2.0 * c2 - 2.0 * g2)
}

/// Columns `∂F/∂s` for `s = (r, w, ε, λ)`.
pub fn control_matrix(q: &PureStateReal4, params: &SimParams) -> [Vec4; 4] {
    let h = 0.5 * params.inv_tau();
    let (m1, m2) = (q.mean_z1(), q.mean_z2());
    let x = q.to_array();
    [
        std::array::from_fn(|i| h * x[i] * (Z1[i] - m1)),
        std::array::from_fn(|i| h * x[i] * (Z2[i] - m2)),
        eps_direction(q),
        lambda_direction(q),
    ]
}

/// The coupling rotation `ċ = α, α̇ = −c`, the part of `F` independent of `s`.
pub fn free_drift(q: &PureStateReal4) -> Vec4 {
    [0.0, q.alpha, -q.c, 0.0]
}

/// `F(q, s)`: the state velocity produced by the controls `s`.
pub fn controlled_drift(q: &PureStateReal4, s: &StochasticControls, params: &SimParams) -> Vec4 {
    let PureStateReal4 { a, c, alpha: al, gamma: g } = *q;
    let StochasticControls { r, w, epsilon: e, lambda: l } = *s;
    let it = params.inv_tau();
    let (cg, ag) = (c * c + g * g, al * al + g * g);
    let aa = it * (a * w * cg + a * r * ag);
    let cc = it * (c * w * (cg - 1.0) + c * r * ag);
    let dd = it * (al * w * cg + al * r * (ag - 1.0));
    let yy = it * (g * w * (cg - 1.0) + g * r * (ag - 1.0));
    [
        aa - c * l - al * e,
        cc + al + a * l - g * e,
        dd - c + a * e - g * l,
        yy + c * e + al * l,
    ]
}

/// Running cost `(λ² + ε²)/2Γ + (1/2τ)(r² + w² − 2r r̄ − 2w w̄ + 2)`.
///
/// With `Γ = 0` the noise controls must vanish and the noise term is dropped.
pub fn control_cost(q: &PureStateReal4, s: &StochasticControls, params: &SimParams) -> Result<f64> {
    let (rb, wb) = mean_readouts(q);
    let StochasticControls { r, w, epsilon: e, lambda: l } = *s;
    let noise = if params.gamma == 0.0 {
        if e != 0.0 || l != 0.0 {
            return Err(Error::UndefinedNoise);
        }
        0.0
    } else {
        (l * l + e * e) / (2.0 * params.gamma)
    };
    let readout = if params.measured() {
        0.5 * params.inv_tau() * (r * r + w * w - 2.0 * r * rb - 2.0 * w * wb + 2.0)
    } else {
        0.0
    };
    Ok(noise + readout)
}

pub fn stochastic_hamiltonian(x: &PhasePoint, s: &StochasticControls, params: &SimParams) -> Result<f64> {
    let f = controlled_drift(&x.q, s, params);
    let pf: f64 = (0..4).map(|i| x.p[i] * f[i]).sum();
    Ok(pf - control_cost(&x.q, s, params)?)
}

/// Stationary controls of the Hamiltonian.
pub fn optimal_controls(x: &PhasePoint, params: &SimParams) -> StochasticControls {
    let PureStateReal4 { a, c, alpha: al, gamma: g } = x.q;
    let [pa, pc, pal, pg] = x.p;
    let gm = params.gamma;
    let lambda = -gm * (-a * pc + c * pa + pal * g - pg * al);
    let epsilon = gm * (a * pal + c * pg - pa * al - pc * g);
    let (rb, wb) = mean_readouts(&x.q);
    let (ag, cg) = (al * al + g * g, c * c + g * g);
    let (r, w) = if params.measured() {
        (
            rb + a * pa * ag + c * pc * ag + al * pal * (ag - 1.0) + g * pg * (ag - 1.0),
            wb + a * pa * cg + c * pc * (cg - 1.0) + al * pal * cg + g * pg * (cg - 1.0),
        )
    } else {
        (rb, wb)
    };
    StochasticControls { r, w, epsilon, lambda }
}

/// `ṗ = −∂ℋ/∂q` at fixed controls.
pub fn momentum_flow(x: &PhasePoint, s: &StochasticControls, params: &SimParams) -> Vec4 {
    let PureStateReal4 { a, c, alpha: al, gamma: g } = x.q;
    let [pa, pc, pal, pg] = x.p;
    let StochasticControls { r, w, epsilon: e, lambda: l } = *s;
    let it = params.inv_tau();
    let (c2, al2, g2) = (c * c, al * al, g * g);
    let da = -it * (c2 * pa * w + pa * r * al2 + pa * r * g2 + pa * g2 * w) - (pal * e + pc * l);
    let dc = it
        * (-2.0 * a * c * pa * w - 2.0 * c * pal * al * w - 2.0 * c * pg * g * w - 3.0 * c2 * pc * w + 4.0 * c * w
            - pc * r * al2
            - pc * r * g2
            - pc * g2 * w
            + pc * w)
        + pal
        + pa * l
        - pg * e;
    let dal = it
        * (-2.0 * a * pa * r * al - c2 * pal * w - 2.0 * c * pc * r * al - 3.0 * pal * r * al2 - pal * r * g2
            + pal * r
            - pal * g2 * w
            - 2.0 * pg * r * al * g
            + 4.0 * r * al)
        - pc
        + pa * e
        - pg * l;
    let dg = it
        * (-2.0 * a * pa * r * g - 2.0 * a * pa * g * w - 2.0 * c * pc * r * g - 2.0 * c * pc * g * w - c2 * pg * w
            - 2.0 * pal * r * al * g
            - 2.0 * pal * al * g * w
            - pg * r * al2
            - 3.0 * pg * r * g2
            + pg * r
            - 3.0 * pg * g2 * w
            + pg * w
            + 4.0 * r * g
            + 4.0 * g * w)
        + pal * l
        + pc * e;
    [da, dc, dal, dg]
}

/// The closed eight-dimensional extremal vector field.
pub fn phase_flow(x: &PhasePoint, params: &SimParams) -> (Vec4, Vec4) {
    let s = optimal_controls(x, params);
    (controlled_drift(&x.q, &s, params), momentum_flow(x, &s, params))
}

/// ℋ evaluated at the optimal controls; conserved along extremals.
pub fn extremal_energy(x: &PhasePoint, params: &SimParams) -> f64 {
    let s = optimal_controls(x, params);
    let f = controlled_drift(&x.q, &s, params);
    let pf: f64 = (0..4).map(|i| x.p[i] * f[i]).sum();
    pf - control_cost(&x.q, &s, params).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalOptions {
    /// Spacing of the recorded grid; the last interval may be shorter.
    pub dt_out: f64,
    pub ode: OdeOptions,
    pub p_max: f64,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        Self {
            dt_out: 0.005,
            ode: OdeOptions::default(),
            p_max: P_MAX,
        }
    }
}

pub(crate) fn output_grid(t_final: f64, dt_out: f64) -> Vec<f64> {
    if t_final == 0.0 {
        return vec![0.0];
    }
    let n = (t_final.abs() / dt_out).ceil().max(1.0) as usize;
    (0..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

pub fn integrate_extremal(x0: &PhasePoint, params: &SimParams, t_final: f64) -> Result<ExtremalTrajectory> {
    integrate_extremal_with(x0, params, t_final, &ExtremalOptions::default())
}

/// Integrates the phase flow on `[0, t_final]` (backwards if `t_final < 0`)
/// together with the action.
pub fn integrate_extremal_with(
    x0: &PhasePoint,
    params: &SimParams,
    t_final: f64,
    opts: &ExtremalOptions,
) -> Result<ExtremalTrajectory> {
    let y0 = x0.to_array();
    if !y0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("initial phase point is not finite".into()));
    }
    let times = output_grid(t_final, opts.dt_out);
    let rhs = |_t: f64, y: &[f64; 9]| -> [f64; 9] {
        let x = PhasePoint::from_array(&std::array::from_fn(|i| y[i]));
        let s = optimal_controls(&x, params);
        let dq = controlled_drift(&x.q, &s, params);
        let dp = momentum_flow(&x, &s, params);
        let cost = control_cost(&x.q, &s, params).unwrap_or(f64::NAN);
        std::array::from_fn(|i| match i {
            0..=3 => dq[i],
            4..=7 => dp[i - 4],
            _ => cost,
        })
    };
    let p_max = opts.p_max;
    let guard = |_t: f64, y: &[f64; 9]| {
        let p2: f64 = y[4..8].iter().map(|v| v * v).sum();
        (p2.sqrt() > p_max).then(|| format!("|p| exceeded {p_max:e}"))
    };
    let mut z0 = [0.0; 9];
    z0[..8].copy_from_slice(&y0);
    let ys = integrate(rhs, z0, &times, &opts.ode, guard)?;
    let phase_points: Vec<PhasePoint> = ys
        .iter()
        .map(|y| PhasePoint::from_array(&std::array::from_fn(|i| y[i])))
        .collect();
    let controls: Vec<StochasticControls> = phase_points.iter().map(|x| optimal_controls(x, params)).collect();
    let integrand = phase_points
        .iter()
        .zip(&controls)
        .map(|(x, s)| control_cost(&x.q, s, params))
        .collect::<Result<Vec<_>>>()?;
    let action = ys.last().map_or(0.0, |y| y[8]);
    Ok(ExtremalTrajectory {
        times,
        phase_points,
        controls,
        integrand,
        action,
    })
}
