//! The global optimum: mean readouts, no unitary noise, no final constraint.

use serde::{Deserialize, Serialize};

use super::{controlled_drift, mean_readouts, output_grid, StochasticControls};
use crate::error::{Error, Result};
use crate::kraus::SimParams;
use crate::ode::{integrate, OdeOptions};
use crate::state::{concurrence_sq, normalize, PureStateReal4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub times: Vec<f64>,
    pub states: Vec<PureStateReal4>,
    pub concurrence_sq: Vec<f64>,
}

/// `q̇ = F(q, (r̄, w̄, 0, 0))`. The unitary-noise controls vanish, so the
/// result does not depend on `Γ`.
pub fn global_optimum_velocity(q: &PureStateReal4, params: &SimParams) -> [f64; 4] {
    let (r, w) = mean_readouts(q);
    controlled_drift(
        q,
        &StochasticControls {
            r,
            w,
            epsilon: 0.0,
            lambda: 0.0,
        },
        params,
    )
}

pub fn global_optimum_flow(q0: PureStateReal4, params: &SimParams, t_final: f64) -> Result<StatePath> {
    global_optimum_flow_with(q0, params, t_final, &GlobalOptions::default())
}

pub fn global_optimum_flow_with(
    q0: PureStateReal4,
    params: &SimParams,
    t_final: f64,
    opts: &GlobalOptions,
) -> Result<StatePath> {
    let q0 = normalize(q0)?;
    let times = output_grid(t_final, opts.dt_out);
    let ys = integrate(
        |_, y: &[f64; 4]| global_optimum_velocity(&PureStateReal4::from_array(*y), params),
        q0.to_array(),
        &times,
        &opts.ode,
        |_, _| None,
    )?;
    let states: Vec<PureStateReal4> = ys.into_iter().map(PureStateReal4::from_array).collect();
    let concurrence_sq = states.iter().map(concurrence_sq).collect();
    Ok(StatePath {
        times,
        states,
        concurrence_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalClass {
    Saturating,
    Oscillatory,
}

impl std::fmt::Display for GlobalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Saturating => "saturating",
            Self::Oscillatory => "oscillatory",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalOptions {
    pub dt_out: f64,
    pub horizon: f64,
    /// Start of the late window on which `C²` is inspected.
    pub window_start: f64,
    /// Largest peak-to-peak range of late `C²` still counted as saturated.
    pub range_tol: f64,
    /// Width at which the bisection stops.
    pub bisection_tol: f64,
    pub ode: OdeOptions,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            dt_out: 0.01,
            horizon: 60.0,
            window_start: 40.0,
            range_tol: 1e-3,
            bisection_tol: 1e-3,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalClassification {
    pub tau: f64,
    pub class: GlobalClass,
    /// Peak-to-peak `C²` in the late window.
    pub late_range: f64,
    /// Mean `C²` in the late window; the saturation value when saturating.
    pub late_mean: f64,
}

/// Classifies the global optimum from the uniform preparation at `tau`.
pub fn classify_global(tau: f64, opts: &GlobalOptions) -> Result<GlobalClassification> {
    let params = SimParams::new(tau, 0.0, 0.02, opts.horizon);
    let path = global_optimum_flow_with(PureStateReal4::uniform(), &params, opts.horizon, opts)?;
    let late: Vec<f64> = path
        .times
        .iter()
        .zip(&path.concurrence_sq)
        .filter(|(t, _)| **t >= opts.window_start)
        .map(|(_, c)| *c)
        .collect();
    let max = late.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = late.iter().copied().fold(f64::INFINITY, f64::min);
    let late_range = max - min;
    let late_mean = late.iter().sum::<f64>() / late.len() as f64;
    let class = if late_range < opts.range_tol {
        GlobalClass::Saturating
    } else {
        GlobalClass::Oscillatory
    };
    Ok(GlobalClassification {
        tau,
        class,
        late_range,
        late_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub tau_critical: f64,
    /// Final bracket `[saturating, oscillatory]`.
    pub bracket: (f64, f64),
    pub grid: Vec<GlobalClassification>,
}

/// Classifies every grid point, then bisects the first saturating →
/// oscillatory switch.
pub fn detect_global_transition(tau_grid: &[f64], opts: &GlobalOptions) -> Result<TransitionEstimate> {
    let mut sorted = tau_grid.to_vec();
    if sorted.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("tau grid values must be positive".into()));
    }
    sorted.sort_by(|a, b| a.total_cmp(b));
    let grid = sorted
        .iter()
        .map(|&t| classify_global(t, opts))
        .collect::<Result<Vec<_>>>()?;
    let switch = grid
        .windows(2)
        .find(|w| w[0].class == GlobalClass::Saturating && w[1].class == GlobalClass::Oscillatory)
        .ok_or(Error::AmbiguousTransition)?;
    let (mut lo, mut hi) = (switch[0].tau, switch[1].tau);
    while hi - lo > opts.bisection_tol {
        let mid = 0.5 * (lo + hi);
        match classify_global(mid, opts)?.class {
            GlobalClass::Saturating => lo = mid,
            GlobalClass::Oscillatory => hi = mid,
        }
    }
    Ok(TransitionEstimate {
        tau_critical: 0.5 * (lo + hi),
        bracket: (lo, hi),
        grid,
    })
}
