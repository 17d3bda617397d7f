//! Action quadrature and classification of extremals against nearby paths.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{control_cost, control_matrix, controlled_drift, mean_readouts, ExtremalTrajectory, StochasticControls};
use crate::kraus::SimParams;
use crate::rng::stream;
use crate::state::PureStateReal4;

/// Composite Simpson quadrature on a uniform grid, with a 3/8 panel at the
/// end when the number of intervals is odd.
pub(crate) fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (y[0] + y[1]),
        2 => h / 3.0 * (y[0] + 4.0 * y[1] + y[2]),
        3 => 3.0 * h / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3]),
        _ => {
            let even = if n % 2 == 0 { n } else { n - 3 };
            let mut s = y[0] + y[even];
            for (k, v) in y.iter().enumerate().take(even).skip(1) {
                s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = h / 3.0 * s;
            if even < n {
                total += simpson(&y[even..], h);
            }
            total
        }
    }
}

/// Action of a recorded extremal by quadrature of its running cost.
pub fn action_along(traj: &ExtremalTrajectory, _params: &SimParams) -> f64 {
    if traj.times.len() < 2 {
        return 0.0;
    }
    let h = traj.times[1] - traj.times[0];
    simpson(&traj.integrand, h)
}

/// Smallest running cost among controls reproducing the velocity `qdot` at `q`;
/// infinite when no control can.
pub fn path_cost(q: &PureStateReal4, qdot: &[f64; 4], params: &SimParams) -> f64 {
    let (rb, wb) = mean_readouts(q);
    let base = StochasticControls {
        r: rb,
        w: wb,
        epsilon: 0.0,
        lambda: 0.0,
    };
    let f0 = controlled_drift(q, &base, params);
    // Off the unit sphere the readout drift has a radial part of order
    // (|q|² − 1)·w/τ; only the tangential mismatch has to be produced.
    let x = q.to_array();
    let n2 = q.norm_sqr();
    let mut d = Vector4::from_fn(|i, _| qdot[i] - f0[i]);
    let radial = (0..4).map(|i| d[i] * x[i]).sum::<f64>() / n2;
    for i in 0..4 {
        d[i] -= radial * x[i];
    }
    let cols = control_matrix(q, params);
    let sw = [
        if params.measured() { params.tau.sqrt() } else { 0.0 },
        if params.measured() { params.tau.sqrt() } else { 0.0 },
        params.gamma.sqrt(),
        params.gamma.sqrt(),
    ];
    let m = Matrix4::from_fn(|i, j| cols[j][i] * sw[j]);
    if !m.iter().chain(d.iter()).all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let Some(u) = min_norm_solve(&m, &d) else {
        return f64::INFINITY;
    };
    let mut s = base.to_array();
    for k in 0..4 {
        s[k] += sw[k] * u[k];
    }
    control_cost(q, &StochasticControls::from_array(s), params).unwrap_or(f64::INFINITY)
}

/// Minimum-norm `u` with `m u = d`, or `None` when `d` leaves the range of `m`.
///
/// The SVD of some nearly rank-deficient matrices comes back inaccurate in one
/// orientation, so both `m` and `mᵀ` are decomposed and the better
/// reconstruction is used.
fn min_norm_solve(m: &Matrix4<f64>, d: &Vector4<f64>) -> Option<Vector4<f64>> {
    let direct = m.svd(true, true);
    let flipped = m.transpose().svd(true, true);
    let err = |svd: &nalgebra::SVD<f64, nalgebra::U4, nalgebra::U4>, target: &Matrix4<f64>| {
        svd.recompose().map_or(f64::INFINITY, |r| (r - target).norm())
    };
    let eps = 1e-10 * m.norm().max(f64::MIN_POSITIVE);
    let pinv = if err(&direct, m) <= err(&flipped, &m.transpose()) {
        direct.pseudo_inverse(eps).ok()?
    } else {
        flipped.pseudo_inverse(eps).ok()?.transpose()
    };
    let u = pinv * d;
    ((m * u - d).norm() <= 1e-9 * d.norm().max(1.0)).then_some(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    MostProbable,
    LeastProbable,
    Saddle,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MostProbable => "most-probable",
            Self::LeastProbable => "least-probable",
            Self::Saddle => "saddle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationOptions {
    pub n_perturbations: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        Self {
            n_perturbations: 200,
            amplitude: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub class: Classification,
    pub action: f64,
    pub n_larger: usize,
    pub n_smaller: usize,
    /// Smallest and largest `S_perturbed − S`.
    pub min_delta: f64,
    pub max_delta: f64,
}

/// Smooth bump on `[t1, t2]` and its derivative.
fn bump(t: f64, t1: f64, t2: f64) -> (f64, f64) {
    let x = (2.0 * t - t1 - t2) / (t2 - t1);
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let d = 1.0 - x * x;
    let b = (1.0 - 1.0 / d).exp();
    (b, b * (-2.0 * x / (d * d)) * 2.0 / (t2 - t1))
}

/// Compares the action of `traj` with paths `normalize(q + A b(t) v)` that
/// share its end points.
pub fn classify_extremum(traj: &ExtremalTrajectory, params: &SimParams, opts: &PerturbationOptions) -> ClassificationReport {
    let n = traj.times.len();
    let t_final = traj.times.last().copied().unwrap_or(0.0);
    let reference: Vec<f64> = traj
        .phase_points
        .iter()
        .zip(&traj.controls)
        .map(|(x, s)| path_cost(&x.q, &controlled_drift(&x.q, s, params), params))
        .collect();
    let h = if n > 1 { traj.times[1] - traj.times[0] } else { 0.0 };
    let s_ref = simpson(&reference, h);
    if n < 3 || !(t_final > 0.0) {
        // No interior point to perturb.
        return ClassificationReport {
            class: Classification::MostProbable,
            action: s_ref,
            n_larger: 0,
            n_smaller: 0,
            min_delta: 0.0,
            max_delta: 0.0,
        };
    }
    let mut larger = 0;
    let mut smaller = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..opts.n_perturbations {
        let mut rng = stream(opts.seed, k as u64);
        let t1 = rng.random::<f64>() * 0.5 * t_final;
        let len = 0.25 * t_final + rng.random::<f64>() * (t_final - 0.25 * t_final - t1).max(0.0);
        let t2 = (t1 + len).min(t_final);
        let mut v: [f64; 4] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vn);
        let costs: Vec<f64> = (0..n)
            .map(|i| {
                let x = &traj.phase_points[i];
                let qdot = controlled_drift(&x.q, &traj.controls[i], params);
                let (b, db) = bump(traj.times[i], t1, t2);
                let q = x.q.to_array();
                let u: [f64; 4] = std::array::from_fn(|j| q[j] + opts.amplitude * b * v[j]);
                let du: [f64; 4] = std::array::from_fn(|j| qdot[j] + opts.amplitude * db * v[j]);
                let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                let qp: [f64; 4] = std::array::from_fn(|j| u[j] / un);
                let proj: f64 = (0..4).map(|j| qp[j] * du[j]).sum();
                let qpdot: [f64; 4] = std::array::from_fn(|j| (du[j] - qp[j] * proj) / un);
                path_cost(&PureStateReal4::from_array(qp), &qpdot, params)
            })
            .collect();
        let s_pert = simpson(&costs, h);
        let delta = if s_pert == s_ref { 0.0 } else { s_pert - s_ref };
        if delta < 0.0 {
            smaller += 1;
        } else {
            larger += 1;
        }
        lo = lo.min(delta);
        hi = hi.max(delta);
    }
    let class = if smaller == 0 {
        Classification::MostProbable
    } else if larger == 0 {
        Classification::LeastProbable
    } else {
        Classification::Saddle
    };
    ClassificationReport {
        class,
        action: s_ref,
        n_larger: larger,
        n_smaller: smaller,
        min_delta: lo,
        max_delta: hi,
    }
}
