//! Steady-state estimation and noise-strength sweeps.

use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_se, mean, moving_block_bootstrap_se, std_dev};
use super::{for_each_member, Backend};
use crate::error::{Error, Result};
use crate::kraus::SimParams;
use crate::rng::{derive_seed, stream, RESAMPLING_STREAM};
use crate::state::PureStateReal4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateOptions {
    pub burn_in: f64,
    pub window: f64,
    pub n_bootstrap: usize,
    /// Half-window discrepancy, in combined standard errors, flagged as nonstationary.
    pub nonstationary_sigma: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            burn_in: 15.0,
            window: 15.0,
            n_bootstrap: 1000,
            nonstationary_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub mean_c: f64,
    pub mean_c_err: f64,
    pub mean_c2: f64,
    pub mean_c2_err: f64,
    pub n_traj: usize,
    pub n_aborted: usize,
    /// `(second half − first half) / combined σ` of the windowed `C²`.
    pub half_z: f64,
    pub nonstationary: bool,
}

/// Window means of one trajectory: C, C², and C² on each half.
#[derive(Debug, Clone, Copy)]
struct WindowSummary {
    c: f64,
    c2: f64,
    first: f64,
    second: f64,
}

fn window_range(params: &SimParams, opts: &SteadyStateOptions) -> Result<(usize, usize)> {
    if !(opts.burn_in >= 0.0) || !(opts.window > 0.0) {
        return Err(Error::InvalidParameter("burn-in must be non-negative and window positive".into()));
    }
    if params.t_final + 1e-9 < opts.burn_in + opts.window {
        return Err(Error::InvalidParameter(format!(
            "t_final {} shorter than burn-in + window {}",
            params.t_final,
            opts.burn_in + opts.window
        )));
    }
    let lo = (opts.burn_in / params.dt).round() as usize;
    let hi = (((opts.burn_in + opts.window) / params.dt).round() as usize).min(params.n_steps());
    if hi < lo + 3 {
        return Err(Error::InvalidParameter("window shorter than four time steps".into()));
    }
    Ok((lo, hi))
}

/// Time-and-ensemble average of `C` and `C²` over `[burn_in, burn_in + window]`.
///
/// Each trajectory's window mean is one sample, so the trajectory bootstrap
/// accounts for the autocorrelation inside the window. A single trajectory
/// falls back to a moving-block bootstrap along time.
pub fn steady_state_estimate(
    q0: PureStateReal4,
    params: &SimParams,
    backend: Backend,
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    let (lo, hi) = window_range(params, opts)?;
    let mid = (lo + hi) / 2;
    let mut sums = Vec::with_capacity(params.n_traj);
    let mut single: Option<Vec<f64>> = None;
    let keep_single = params.n_traj == 1;
    let aborted = for_each_member(
        q0,
        params,
        backend,
        |rec| {
            let w = &rec.concurrence_sq[lo..=hi];
            let s = WindowSummary {
                c: mean(&w.iter().map(|x| x.sqrt()).collect::<Vec<_>>()),
                c2: mean(w),
                first: mean(&rec.concurrence_sq[lo..mid]),
                second: mean(&rec.concurrence_sq[mid..=hi]),
            };
            (s, keep_single.then(|| w.to_vec()))
        },
        |(s, w)| {
            sums.push(s);
            if w.is_some() {
                single = w;
            }
        },
    )?;
    let n = sums.len();
    let mut rng = stream(params.seed, RESAMPLING_STREAM);
    let c: Vec<f64> = sums.iter().map(|s| s.c).collect();
    let c2: Vec<f64> = sums.iter().map(|s| s.c2).collect();
    let (c_err, c2_err, half_z) = if let Some(w) = single {
        let block = ((w.len() as f64).sqrt() as usize).max(1);
        let sq: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let c_err = moving_block_bootstrap_se(&sq, block, opts.n_bootstrap, &mut rng);
        let c2_err = moving_block_bootstrap_se(&w, block, opts.n_bootstrap, &mut rng);
        let h = w.len() / 2;
        let (a, b) = (&w[..h], &w[h..]);
        let hb = block.min(h / 2).max(1);
        let sa = moving_block_bootstrap_se(a, hb, opts.n_bootstrap, &mut rng);
        let sb = moving_block_bootstrap_se(b, hb, opts.n_bootstrap, &mut rng);
        let comb = sa.hypot(sb);
        (c_err, c2_err, (mean(b) - mean(a)) / comb)
    } else {
        let first: Vec<f64> = sums.iter().map(|s| s.first).collect();
        let second: Vec<f64> = sums.iter().map(|s| s.second).collect();
        // Halves from the same trajectories are correlated, so the paired
        // difference carries the error.
        let diff: Vec<f64> = first.iter().zip(&second).map(|(a, b)| b - a).collect();
        let dse = std_dev(&diff) / (n as f64).sqrt();
        let z = if dse > 0.0 { mean(&diff) / dse } else { 0.0 };
        (
            bootstrap_se(&c, opts.n_bootstrap, &mut rng),
            bootstrap_se(&c2, opts.n_bootstrap, &mut rng),
            z,
        )
    };
    Ok(SteadyState {
        mean_c: mean(&c),
        mean_c_err: c_err,
        mean_c2: mean(&c2),
        mean_c2_err: c2_err,
        n_traj: n,
        n_aborted: aborted.len(),
        nonstationary: half_z.abs() > opts.nonstationary_sigma,
        half_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub gamma: f64,
    pub estimate: SteadyState,
}

/// Interior-maximum test on a swept curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonMonotonicity {
    pub argmax: usize,
    pub max: f64,
    /// `(max − first) / √(σ_max² + σ_first²)`.
    pub excess_sigma: f64,
    pub last_below_max: bool,
    pub detected: bool,
}

impl NonMonotonicity {
    pub fn test(values: &[f64], errors: &[f64], sigma: f64) -> Self {
        let argmax = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        let n = values.len();
        let max = values.get(argmax).copied().unwrap_or(f64::NAN);
        let excess_sigma = if n > 0 {
            (max - values[0]) / errors[argmax].hypot(errors[0])
        } else {
            f64::NAN
        };
        let last_below_max = n > 0 && values[n - 1] < max;
        let interior = argmax > 0 && argmax + 1 < n;
        Self {
            argmax,
            max,
            excess_sigma: if excess_sigma.is_nan() { 0.0 } else { excess_sigma },
            last_below_max,
            detected: interior && excess_sigma > sigma && last_below_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub tau: f64,
    pub points: Vec<SweepPoint>,
    pub burn_in: f64,
    pub window: f64,
    pub c2_shape: NonMonotonicity,
    pub c_shape: NonMonotonicity,
}

/// Log-spaced grid of `n` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| match k {
                0 => lo,
                k if k == n - 1 => hi,
                k => (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp(),
            })
            .collect(),
    }
}

/// Steady state at fixed `τ` for each `Γ` of the grid. Point `j` uses the
/// seed `derive_seed(params.seed, j)`.
pub fn sweep_gamma(
    q0: PureStateReal4,
    tau: f64,
    gamma_grid: &[f64],
    params: &SimParams,
    backend: Backend,
    opts: &SteadyStateOptions,
) -> Result<SweepResult> {
    if gamma_grid.is_empty() {
        return Err(Error::InvalidParameter("gamma grid is empty".into()));
    }
    if let Some(g) = gamma_grid.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma grid value {g} is not positive")));
    }
    let mut points = Vec::with_capacity(gamma_grid.len());
    for (j, &gamma) in gamma_grid.iter().enumerate() {
        let p = SimParams {
            tau,
            gamma,
            seed: derive_seed(params.seed, j as u64),
            ..*params
        };
        points.push(SweepPoint {
            tau,
            gamma,
            estimate: steady_state_estimate(q0, &p, backend, opts)?,
        });
    }
    let col = |f: fn(&SteadyState) -> f64| points.iter().map(|p| f(&p.estimate)).collect::<Vec<_>>();
    let sigma = 3.0;
    Ok(SweepResult {
        tau,
        burn_in: opts.burn_in,
        window: opts.window,
        c2_shape: NonMonotonicity::test(&col(|s| s.mean_c2), &col(|s| s.mean_c2_err), sigma),
        c_shape: NonMonotonicity::test(&col(|s| s.mean_c), &col(|s| s.mean_c_err), sigma),
        points,
    })
}
