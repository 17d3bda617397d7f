//! Multi-start shooting on the initial momentum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{integrate_extremal_with, ExtremalOptions, ExtremalTrajectory, PhasePoint};
use crate::error::{Error, Result};
use crate::kraus::SimParams;
use crate::ode::OdeOptions;
use crate::rng::stream;
use crate::sde::{eps_direction, lambda_direction, Vec4};
use crate::state::{concurrence_sq, normalize, PureStateReal4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryTarget {
    /// Reach exactly this final state.
    State(PureStateReal4),
    /// Reach any final state with this concurrence.
    Concurrence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub n_starts: usize,
    /// Start momenta are uniform on `[−p_range, p_range]⁴`; start 0 is `p = 0`.
    pub p_range: f64,
    pub seed: u64,
    pub max_iter: usize,
    /// Residual norm at which a start stops refining.
    pub tol: f64,
    /// Residual norm below which a start counts as a solution.
    pub accept: f64,
    pub dt_out: f64,
    pub ode: OdeOptions,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            n_starts: 64,
            p_range: 5.0,
            seed: 0,
            max_iter: 200,
            tol: 1e-10,
            accept: 1e-6,
            dt_out: 0.005,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub trajectory: ExtremalTrajectory,
    pub p0: Vec4,
    pub residual: f64,
    pub n_converged: usize,
    pub n_starts: usize,
}

pub fn shoot_to_boundary(
    q0: PureStateReal4,
    target: BoundaryTarget,
    params: &SimParams,
    t_final: f64,
) -> Result<ExtremalTrajectory> {
    shoot_with(q0, target, params, t_final, &ShootingOptions::default()).map(|s| s.trajectory)
}

/// Boundary mismatch at the end of an extremal.
///
/// For a concurrence target the end point is free on the level set, so the
/// final momentum must annihilate the level set's tangent directions. Local
/// rotations preserve concurrence and span that tangent, which gives the two
/// conditions `p·G_ε q = p·G_λ q = 0`.
fn boundary_residual(end: &PhasePoint, target: &BoundaryTarget) -> Vec<f64> {
    match target {
        BoundaryTarget::State(qf) => {
            let q = end.q.to_array();
            let f = qf.to_array();
            (0..4).map(|i| q[i] - f[i]).collect()
        }
        BoundaryTarget::Concurrence(cf) => {
            let gap = (1.0 - concurrence_sq(&end.q)).max(0.0).sqrt() - (1.0 - cf * cf).max(0.0).sqrt();
            let e = eps_direction(&end.q);
            let l = lambda_direction(&end.q);
            let pe: f64 = (0..4).map(|i| end.p[i] * e[i]).sum();
            let pl: f64 = (0..4).map(|i| end.p[i] * l[i]).sum();
            vec![gap, pe, pl]
        }
    }
}

struct Problem<'a> {
    q0: PureStateReal4,
    target: BoundaryTarget,
    params: &'a SimParams,
    t_final: f64,
    coarse: ExtremalOptions,
}

impl Problem<'_> {
    fn residual(&self, p0: &Vec4) -> Option<Vec<f64>> {
        let x0 = PhasePoint::new(self.q0, *p0);
        let traj = integrate_extremal_with(&x0, self.params, self.t_final, &self.coarse).ok()?;
        let r = boundary_residual(traj.phase_points.last()?, &self.target);
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    /// Levenberg–Marquardt from `start`; returns the refined momentum and its residual norm.
    fn refine(&self, start: Vec4, opts: &ShootingOptions) -> Option<(Vec4, f64)> {
        let mut x = start;
        let mut r = self.residual(&x)?;
        let mut norm = l2(&r);
        let mut mu = 1e-3;
        for _ in 0..opts.max_iter {
            if norm < opts.tol {
                break;
            }
            let m = r.len();
            let mut jac = DMatrix::<f64>::zeros(m, 4);
            for k in 0..4 {
                let h = 1e-7 * x[k].abs().max(1.0);
                let mut xp = x;
                xp[k] += h;
                let rp = self.residual(&xp)?;
                for i in 0..m {
                    jac[(i, k)] = (rp[i] - r[i]) / h;
                }
            }
            let rv = DVector::from_vec(r.clone());
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * &rv;
            let mut improved = false;
            while mu < 1e14 {
                let a = &jtj + DMatrix::<f64>::identity(4, 4) * mu;
                let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                    mu *= 10.0;
                    continue;
                };
                let xt: Vec4 = std::array::from_fn(|k| x[k] + step[k]);
                match self.residual(&xt) {
                    Some(rt) if l2(&rt) < norm => {
                        x = xt;
                        norm = l2(&rt);
                        r = rt;
                        mu = (mu / 3.0).max(1e-12);
                        improved = true;
                        break;
                    }
                    _ => mu *= 4.0,
                }
            }
            if !improved {
                break;
            }
        }
        Some((x, norm))
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Shoots from `q0` to `target`; among converged starts the one with the
/// smallest action wins, ties going to the smaller initial momentum.
pub fn shoot_with(
    q0: PureStateReal4,
    target: BoundaryTarget,
    params: &SimParams,
    t_final: f64,
    opts: &ShootingOptions,
) -> Result<ShootingSolution> {
    let q0 = normalize(q0)?;
    if let BoundaryTarget::Concurrence(cf) = target {
        if !(0.0..=1.0).contains(&cf) {
            return Err(Error::InvalidParameter("target concurrence must lie in [0, 1]".into()));
        }
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter("t_final must be finite and non-negative".into()));
    }
    let full = ExtremalOptions {
        dt_out: opts.dt_out,
        ode: opts.ode,
        ..Default::default()
    };
    let problem = Problem {
        q0,
        target,
        params,
        t_final,
        coarse: ExtremalOptions {
            dt_out: t_final.max(f64::MIN_POSITIVE),
            ..full
        },
    };
    let n = opts.n_starts.max(1);
    let candidates: Vec<Option<(Vec4, f64)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let start: Vec4 = if k == 0 {
                [0.0; 4]
            } else {
                let mut rng = stream(opts.seed, k as u64);
                std::array::from_fn(|_| opts.p_range * (2.0 * rng.random::<f64>() - 1.0))
            };
            problem.refine(start, opts)
        })
        .collect();
    let best_residual = candidates
        .iter()
        .flatten()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    let mut solutions: Vec<(f64, f64, Vec4, f64, ExtremalTrajectory)> = candidates
        .iter()
        .flatten()
        .filter(|c| c.1 < opts.accept)
        .filter_map(|&(p0, res)| {
            let traj = integrate_extremal_with(&PhasePoint::new(q0, p0), params, t_final, &full).ok()?;
            Some((traj.action, l2(&p0), p0, res, traj))
        })
        .collect();
    if solutions.is_empty() {
        return Err(Error::NoSolution { best_residual });
    }
    let n_converged = solutions.len();
    solutions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (_, _, p0, residual, trajectory) = solutions.swap_remove(0);
    Ok(ShootingSolution {
        trajectory,
        p0,
        residual,
        n_converged,
        n_starts: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::{classify_extremum, Classification, PerturbationOptions};
    use crate::kraus::apply_unitary;
    use crate::kraus::UnitaryNoisePair;
    use approx::assert_abs_diff_eq;

    fn quick() -> ShootingOptions {
        ShootingOptions {
            n_starts: 8,
            ..Default::default()
        }
    }

    #[test]
    fn zero_length_path() {
        let q0 = PureStateReal4::uniform();
        let p = SimParams::new(0.4, 0.2, 0.02, 1.0);
        let sol = shoot_with(q0, BoundaryTarget::State(q0), &p, 0.0, &quick()).unwrap();
        assert_eq!(sol.trajectory.action, 0.0);
        assert_eq!(sol.trajectory.times, vec![0.0]);
        let miss = shoot_with(q0, BoundaryTarget::State(PureStateReal4::new(1.0, 0.0, 0.0, 0.0)), &p, 0.0, &quick());
        assert!(matches!(miss, Err(Error::NoSolution { .. })));
    }

    #[test]
    fn free_rotation_limit() {
        let p = SimParams::new(f64::INFINITY, 0.0, 0.02, 1.0);
        let t = std::f64::consts::FRAC_PI_2;
        let qf = apply_unitary(&PureStateReal4::uniform(), UnitaryNoisePair::default(), t);
        let sol = shoot_with(PureStateReal4::uniform(), BoundaryTarget::State(qf), &p, t, &quick()).unwrap();
        assert_eq!(sol.p0, [0.0; 4]);
        assert_eq!(sol.trajectory.action, 0.0);
        let c2 = sol.trajectory.concurrence_sq();
        assert_abs_diff_eq!(*c2.last().unwrap(), 1.0, epsilon = 1e-9);
        let report = classify_extremum(&sol.trajectory, &p, &PerturbationOptions { n_perturbations: 20, ..Default::default() });
        assert_eq!(report.class, Classification::MostProbable);
    }

    #[test]
    fn reaches_a_state_target() {
        let p = SimParams::new(0.5, 0.2, 0.02, 1.0);
        // A target produced by an extremal from a known momentum is reachable.
        let x0 = PhasePoint::new(PureStateReal4::uniform(), [0.3, -0.2, 0.1, 0.4]);
        let qf = integrate_extremal_with(&x0, &p, 1.5, &ExtremalOptions::default())
            .unwrap()
            .phase_points
            .last()
            .unwrap()
            .q;
        let sol = shoot_with(PureStateReal4::uniform(), BoundaryTarget::State(qf), &p, 1.5, &quick()).unwrap();
        assert!(sol.residual < 1e-6);
        let end = sol.trajectory.phase_points.last().unwrap().q.to_array();
        for (u, v) in end.iter().zip(qf.to_array()) {
            assert_abs_diff_eq!(*u, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn reaches_a_concurrence_target() {
        let p = SimParams::new(0.5, 0.2, 0.02, 1.0);
        let sol = shoot_with(PureStateReal4::uniform(), BoundaryTarget::Concurrence(0.8), &p, 2.0, &quick()).unwrap();
        let end = sol.trajectory.phase_points.last().unwrap();
        assert_abs_diff_eq!(concurrence_sq(&end.q).sqrt(), 0.8, epsilon = 1e-6);
        let report = classify_extremum(&sol.trajectory, &p, &PerturbationOptions { n_perturbations: 30, ..Default::default() });
        assert_eq!(report.class, Classification::MostProbable, "{report:?}");
    }
}
