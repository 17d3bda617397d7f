//! Itô SDE backend: drift and diffusion of the monitored, noisy two-qubit
//! state, integrated by Euler–Maruyama with renormalization.
//!
//! Diffusion columns are ordered `(θ, φ, ε, λ)`: the qubit-1 and qubit-2
//! measurement noises, then the two unitary noises, all unit-variance white
//! noises.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kraus::{run_stepper, ReadoutPair, SimParams, TrajectoryRecord, UnitaryNoisePair};
use crate::state::{normalize, PureStateReal4, Z1, Z2};

pub type Vec4 = [f64; 4];
/// Row `i` is the state component, column `j` the noise.
pub type Mat4x4 = [[f64; 4]; 4];

/// Default Euler–Maruyama step for this backend.
pub const DEFAULT_SDE_DT: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusion {
    pub drift: Vec4,
    pub diffusion: Mat4x4,
}

/// `G_ε q`, the ε-rotation direction.
pub fn eps_direction(q: &PureStateReal4) -> Vec4 {
    [-q.alpha, -q.gamma, q.a, q.c]
}

/// `G_λ q`, the λ-rotation direction.
pub fn lambda_direction(q: &PureStateReal4) -> Vec4 {
    [-q.c, q.a, -q.gamma, q.alpha]
}

pub fn drift(q: &PureStateReal4, params: &SimParams) -> Vec4 {
    let inv_tau = params.inv_tau();
    let (m1, m2) = (q.mean_z1(), q.mean_z2());
    let x = q.to_array();
    let mut f: Vec4 = std::array::from_fn(|i| {
        let spread = (Z1[i] - m1).powi(2) + (Z2[i] - m2).powi(2);
        -0.125 * inv_tau * x[i] * spread - params.gamma * x[i]
    });
    f[1] += q.alpha;
    f[2] -= q.c;
    f
}

pub fn diffusion(q: &PureStateReal4, params: &SimParams) -> Mat4x4 {
    let s = 0.5 * params.inv_tau().sqrt();
    let g = params.gamma.sqrt();
    let (m1, m2) = (q.mean_z1(), q.mean_z2());
    let x = q.to_array();
    let e = eps_direction(q);
    let l = lambda_direction(q);
    std::array::from_fn(|i| [s * x[i] * (Z1[i] - m1), s * x[i] * (Z2[i] - m2), g * e[i], g * l[i]])
}

pub fn drift_diffusion(q: &PureStateReal4, params: &SimParams) -> DriftDiffusion {
    DriftDiffusion {
        drift: drift(q, params),
        diffusion: diffusion(q, params),
    }
}

/// `q·drift + ½ Σ_j |column_j|²`, zero for a norm-preserving Itô flow.
pub fn ito_norm_budget(q: &PureStateReal4, params: &SimParams) -> f64 {
    let f = drift(q, params);
    let b = diffusion(q, params);
    let x = q.to_array();
    let lin: f64 = (0..4).map(|i| x[i] * f[i]).sum();
    let quad: f64 = b.iter().flatten().map(|v| v * v).sum();
    lin + 0.5 * quad
}

/// One raw Euler–Maruyama increment for a given noise draw `xi`, without renormalization.
pub fn em_increment(q: &PureStateReal4, params: &SimParams, xi: Vec4) -> PureStateReal4 {
    let DriftDiffusion { drift, diffusion } = drift_diffusion(q, params);
    let sdt = params.dt.sqrt();
    let x = q.to_array();
    PureStateReal4::from_array(std::array::from_fn(|i| {
        let noise: f64 = (0..4).map(|j| diffusion[i][j] * xi[j]).sum();
        x[i] + drift[i] * params.dt + sdt * noise
    }))
}

fn draw_xi<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> Vec4 {
    let mut xi = [0.0; 4];
    if params.measured() {
        xi[0] = rng.sample(StandardNormal);
        xi[1] = rng.sample(StandardNormal);
    }
    if params.gamma > 0.0 {
        xi[2] = rng.sample(StandardNormal);
        xi[3] = rng.sample(StandardNormal);
    }
    xi
}

/// Euler–Maruyama step followed by renormalization.
pub fn em_step<R: Rng + ?Sized>(q: &PureStateReal4, params: &SimParams, rng: &mut R) -> Result<PureStateReal4> {
    let xi = draw_xi(params, rng);
    normalize(em_increment(q, params, xi))
}

fn em_step_recorded<R: Rng + ?Sized>(
    q: &PureStateReal4,
    params: &SimParams,
    rng: &mut R,
) -> Result<(PureStateReal4, ReadoutPair, UnitaryNoisePair)> {
    let xi = draw_xi(params, rng);
    let next = normalize(em_increment(q, params, xi))?;
    let ro = if params.measured() {
        let s = (params.tau / params.dt).sqrt();
        ReadoutPair {
            r: q.mean_z1() + s * xi[0],
            w: q.mean_z2() + s * xi[1],
        }
    } else {
        ReadoutPair {
            r: q.mean_z1(),
            w: q.mean_z2(),
        }
    };
    let s = (params.gamma / params.dt).sqrt();
    let nz = UnitaryNoisePair {
        epsilon: s * xi[2],
        lambda: s * xi[3],
    };
    Ok((next, ro, nz))
}

pub fn simulate_trajectory_sde<R: Rng + ?Sized>(
    q0: PureStateReal4,
    params: &SimParams,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    run_stepper(q0, params, rng, em_step_recorded)
}

/// The SDE coefficients exactly as typeset in the source, labels included.
///
/// The columns keep the printed labels `(θ, φ, ε, λ)`. In that form θ and φ
/// carry `√Γ` and the unitary rotation directions, while ε and λ carry `1/√τ`
/// and the measurement back-action; the `ȧ` row lists both of its
/// measurement terms under λ; and the `γ⁴` term of `Ỹ` has the opposite sign
/// to the one that conserves the norm. Kept only for the residual report.
pub fn printed_sde(q: &PureStateReal4, params: &SimParams) -> DriftDiffusion {
    let PureStateReal4 { a, c, alpha: al, gamma: g } = *q;
    let (c2, al2, g2) = (c * c, al * al, g * g);
    let it = params.inv_tau();
    let gm = params.gamma;
    let at = c2 * g2 + c2 * c2 / 2.0 + al2 * g2 + al2 * al2 / 2.0 + g2 * g2;
    let ct = -al2 * g2 - al2 * al2 / 2.0 - c2 * g2 + g2 - g2 * g2 - c2 * c2 / 2.0 + c2 - 0.5;
    let dt = -c2 * g2 - c2 * c2 / 2.0 - al2 * g2 + g2 - g2 * g2 - al2 * al2 / 2.0 + al2 - 0.5;
    let yt = -c2 * g2 + c2 - c2 * c2 / 2.0 - al2 * g2 + al2 - al2 * al2 / 2.0 + g2 * g2 + 2.0 * g2 - 1.0;
    let drift = [
        -(a * it * at + a * gm),
        al - gm * c + c * it * ct,
        al * it * dt - c - gm * al,
        g * it * yt - gm * g,
    ];
    let s = it.sqrt();
    let r = gm.sqrt();
    let lam = [
        s * (a * (al2 + g2) + a * (c2 + g2)),
        s * c * (g2 + c2 - 1.0),
        s * al * (g2 + c2),
        s * (c2 * g + g2 * g - g),
    ];
    let eps = [0.0, s * c * (al2 + g2), s * al * (g2 + al2 - 1.0), s * (al2 * g + g2 * g - g)];
    let theta = [-r * c, r * a, -r * g, r * al];
    let phi = [-r * al, -r * g, r * a, r * c];
    let diffusion = std::array::from_fn(|i| [theta[i], phi[i], eps[i], lam[i]]);
    DriftDiffusion { drift, diffusion }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kraus::apply_measurement;
    use crate::rng::stream;
    use crate::state::{concurrence_sq, sample_ergodic};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn random_states(n: usize, seed: u64) -> Vec<PureStateReal4> {
        let mut rng = stream(seed, 0);
        (0..n).map(|_| sample_ergodic(&mut rng)).collect()
    }

    #[test]
    fn unitary_only_limit() {
        let p = SimParams::new(f64::INFINITY, 0.0, DEFAULT_SDE_DT, 1.0);
        let f = drift(&PureStateReal4::uniform(), &p);
        for (x, e) in f.iter().zip([0.0, 0.5, -0.5, 0.0]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-15);
        }
        let b = diffusion(&PureStateReal4::uniform(), &p);
        assert!(b.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn drift_a_vanishes_at_00() {
        let p = SimParams::new(0.3, 0.0, DEFAULT_SDE_DT, 1.0);
        assert_eq!(drift(&PureStateReal4::new(1.0, 0.0, 0.0, 0.0), &p)[0], 0.0);
    }

    #[test]
    fn norm_budget_and_tangency() {
        for (tau, gamma) in [(0.2, 3.0), (2.0, 0.1), (1e9, 0.0), (0.05, 0.0)] {
            let p = SimParams::new(tau, gamma, DEFAULT_SDE_DT, 1.0);
            for q in random_states(500, 3) {
                assert_abs_diff_eq!(ito_norm_budget(&q, &p), 0.0, epsilon = 1e-12);
                let b = diffusion(&q, &p);
                for j in 0..4 {
                    let dot: f64 = (0..4).map(|i| b[i][j] * q.to_array()[i]).sum();
                    assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn noise_columns_switch_off() {
        let q = random_states(1, 8)[0];
        let b = diffusion(&q, &SimParams::new(0.4, 0.0, DEFAULT_SDE_DT, 1.0));
        assert!(b.iter().all(|row| row[2] == 0.0 && row[3] == 0.0));
        let b = diffusion(&q, &SimParams::new(f64::INFINITY, 2.0, DEFAULT_SDE_DT, 1.0));
        assert!(b.iter().all(|row| row[0] == 0.0 && row[1] == 0.0));
    }

    #[test]
    fn theta_column_orthogonal_at_uniform() {
        let q = PureStateReal4::uniform();
        let b = diffusion(&q, &SimParams::new(0.7, 1.0, DEFAULT_SDE_DT, 1.0));
        let dot: f64 = (0..4).map(|i| b[i][0] * q.to_array()[i]).sum();
        assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-16);
    }

    #[test]
    fn one_step_variance_at_00() {
        let p = SimParams::new(0.5, 0.5, DEFAULT_SDE_DT, 1.0);
        let q = PureStateReal4::new(1.0, 0.0, 0.0, 0.0);
        let n = 100_000;
        let mut rng = stream(12, 0);
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let xi = draw_xi(&p, &mut rng);
            let d = em_increment(&q, &p, xi).to_array();
            for i in 0..4 {
                let dx = d[i] - q.to_array()[i];
                sum[i] += dx;
                sq[i] += dx * dx;
            }
        }
        let var: Vec<f64> = (0..4).map(|i| sq[i] / n as f64 - (sum[i] / n as f64).powi(2)).collect();
        let expect = p.gamma * p.dt;
        assert!(var[0] < 1e-12 && var[3] < 1e-12);
        for v in &var[1..3] {
            assert_abs_diff_eq!(*v, expect, epsilon = 4.0 * expect * (2.0 / n as f64).sqrt());
        }
    }

    /// Gauss–Hermite nodes and weights for `∫ f(x) e^{−x²/2} dx / √(2π)`.
    fn hermite_e(n: usize) -> Vec<(f64, f64)> {
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[(k, k - 1)] = b;
            j[(k - 1, k)] = b;
        }
        let eig = SymmetricEigen::new(j);
        (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect()
    }

    #[test]
    fn measurement_drift_matches_kraus_expansion() {
        // Exact Born-mixture expectation of the Kraus back-action over one small
        // step, by quadrature, against δt × the measurement part of the drift.
        let tau = 0.7;
        let dt = 1e-5;
        let p = SimParams::new(tau, 0.0, dt, 1.0);
        let gh = hermite_e(40);
        let sd = (tau / dt).sqrt();
        for q in random_states(5, 21) {
            let x = q.to_array();
            let mut mean = [0.0; 4];
            let mut cov = [[0.0; 4]; 4];
            for i in 0..4 {
                for &(u, wu) in &gh {
                    for &(v, wv) in &gh {
                        let ro = ReadoutPair {
                            r: Z1[i] + sd * u,
                            w: Z2[i] + sd * v,
                        };
                        let d = apply_measurement(&q, ro, &p).unwrap().to_array();
                        let wt = x[i] * x[i] * wu * wv;
                        for k in 0..4 {
                            mean[k] += wt * (d[k] - x[k]);
                            for l in 0..4 {
                                cov[k][l] += wt * (d[k] - x[k]) * (d[l] - x[l]);
                            }
                        }
                    }
                }
            }
            let mut f = drift(&q, &p);
            f[1] -= q.alpha;
            f[2] += q.c;
            let b = diffusion(&q, &p);
            for k in 0..4 {
                assert_abs_diff_eq!(mean[k] / dt, f[k], epsilon = 1e-3);
                for l in 0..4 {
                    let bb: f64 = (0..2).map(|j| b[k][j] * b[l][j]).sum();
                    assert_abs_diff_eq!(cov[k][l] / dt, bb, epsilon = 1e-3);
                }
            }
        }
    }

    #[test]
    fn printed_form_differs_only_where_expected() {
        let p = SimParams::new(0.4, 0.8, DEFAULT_SDE_DT, 1.0);
        for q in random_states(50, 4) {
            let d = drift(&q, &p);
            let pr = printed_sde(&q, &p);
            for k in 0..3 {
                assert_abs_diff_eq!(d[k], pr.drift[k], epsilon = 1e-13);
            }
            // Ỹ: sign of γ⁴ only.
            let g = q.gamma;
            assert_abs_diff_eq!(pr.drift[3] - d[3], 2.0 * g.powi(5) * p.inv_tau(), epsilon = 1e-13);
            let b = diffusion(&q, &p);
            for k in 0..4 {
                assert_abs_diff_eq!(pr.diffusion[k][0], b[k][3], epsilon = 1e-14);
                assert_abs_diff_eq!(pr.diffusion[k][1], b[k][2], epsilon = 1e-14);
            }
            for k in 1..4 {
                assert_abs_diff_eq!(pr.diffusion[k][2], b[k][0], epsilon = 1e-14);
                assert_abs_diff_eq!(pr.diffusion[k][3], b[k][1], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn unmonitored_noiseless_is_near_sin4() {
        let p = SimParams::new(1e9, 0.0, DEFAULT_SDE_DT, 2.0 * std::f64::consts::PI);
        let rec = simulate_trajectory_sde(PureStateReal4::uniform(), &p, &mut stream(0, 0)).unwrap();
        let err = rec
            .times
            .iter()
            .zip(&rec.concurrence_sq)
            .map(|(t, c2)| (c2 - t.sin().powi(4)).abs())
            .fold(0.0, f64::max);
        // Renormalizing a forward-Euler rotation of the (c, α) block shrinks
        // a and γ by O(δt²) per step, so the error over a fixed horizon is O(δt).
        assert!(err < 2.0 * p.dt, "max error {err}");
    }

    #[test]
    fn deterministic_and_normalized() {
        let p = SimParams::new(2.0, 0.1, DEFAULT_SDE_DT, 3.0);
        let a = simulate_trajectory_sde(PureStateReal4::uniform(), &p, &mut stream(5, 2)).unwrap();
        let b = simulate_trajectory_sde(PureStateReal4::uniform(), &p, &mut stream(5, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.states.iter().all(|q| q.is_normalized()));
        assert!(a.concurrence_sq.iter().zip(&a.states).all(|(c, q)| *c == concurrence_sq(q)));
    }

    #[test]
    fn raw_step_norm_error_is_order_dt() {
        let q = PureStateReal4::uniform();
        let mut errs = Vec::new();
        for dt in [0.01, 0.005] {
            let p = SimParams::new(0.5, 0.5, dt, 1.0);
            let mut rng = stream(30, 0);
            let n = 20_000;
            let m: f64 = (0..n)
                .map(|_| (em_increment(&q, &p, draw_xi(&p, &mut rng)).norm() - 1.0).abs())
                .sum::<f64>()
                / n as f64;
            errs.push(m);
        }
        let ratio = errs[0] / errs[1];
        assert!((1.6..2.5).contains(&ratio), "{errs:?}");
    }
}
