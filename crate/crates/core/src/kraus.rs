//! Discrete-time ground-truth simulator: Gaussian Kraus back-action on both
//! qubits followed by the noisy coupling unitary.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::Antisym4;
use crate::state::{concurrence_sq, normalize, PureStateReal4, Z1, Z2};

/// Parameters shared by every stochastic run.
///
/// `tau = f64::INFINITY` switches the measurement off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub tau: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            tau: 0.2,
            gamma: 3.0,
            dt: 0.02,
            t_final: 10.0,
            n_traj: 400,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn new(tau: f64, gamma: f64, dt: f64, t_final: f64) -> Self {
        Self {
            tau,
            gamma,
            dt,
            t_final,
            ..Self::default()
        }
    }

    pub fn with_traj(mut self, n_traj: usize) -> Self {
        self.n_traj = n_traj;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be finite and non-negative");
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return bad("t_final must be finite and non-negative");
        }
        if self.n_traj == 0 {
            return bad("n_traj must be at least 1");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn inv_tau(&self) -> f64 {
        1.0 / self.tau
    }

    pub fn measured(&self) -> bool {
        self.tau.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadoutPair {
    pub r: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitaryNoisePair {
    pub epsilon: f64,
    pub lambda: f64,
}

/// One trajectory on the grid `t_k = k δt`. Index 0 is the initial state and
/// carries zero readouts and noises; entry `k > 0` holds the readouts and
/// noises of the step that produced `states[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<PureStateReal4>,
    pub readouts: Vec<ReadoutPair>,
    pub noises: Vec<UnitaryNoisePair>,
    pub concurrence_sq: Vec<f64>,
}

impl TrajectoryRecord {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            readouts: Vec::with_capacity(n),
            noises: Vec::with_capacity(n),
            concurrence_sq: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(&mut self, t: f64, q: PureStateReal4, ro: ReadoutPair, nz: UnitaryNoisePair) {
        self.times.push(t);
        self.states.push(q);
        self.readouts.push(ro);
        self.noises.push(nz);
        self.concurrence_sq.push(concurrence_sq(&q));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `ε, λ ~ N(0, Γ/δt)`, held constant over one step.
pub fn sample_unitary_noise<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> UnitaryNoisePair {
    if params.gamma == 0.0 {
        return UnitaryNoisePair::default();
    }
    let sd = (params.gamma / params.dt).sqrt();
    let epsilon = sd * rng.sample::<f64, _>(StandardNormal);
    let lambda = sd * rng.sample::<f64, _>(StandardNormal);
    UnitaryNoisePair { epsilon, lambda }
}

/// Exact Born-rule readouts: pick a basis state with probability equal to its
/// population, then add `N(0, τ/δt)` to each of its σ_z eigenvalues.
///
/// Without measurement the Born means `<σ_z>` are returned.
pub fn sample_readouts<R: Rng + ?Sized>(q: &PureStateReal4, params: &SimParams, rng: &mut R) -> ReadoutPair {
    if !params.measured() {
        return ReadoutPair {
            r: q.mean_z1(),
            w: q.mean_z2(),
        };
    }
    let amps = q.to_array();
    let u: f64 = rng.random::<f64>() * q.norm_sqr();
    let mut acc = 0.0;
    let mut idx = 3;
    for (i, x) in amps.iter().enumerate() {
        acc += x * x;
        if u < acc {
            idx = i;
            break;
        }
    }
    let sd = (params.tau / params.dt).sqrt();
    let r = Z1[idx] + sd * rng.sample::<f64, _>(StandardNormal);
    let w = Z2[idx] + sd * rng.sample::<f64, _>(StandardNormal);
    ReadoutPair { r, w }
}

/// Multiplies each amplitude by `exp(−(δt/4τ)[(r−z₁)² + (w−z₂)²])` and renormalizes.
pub fn apply_measurement(q: &PureStateReal4, ro: ReadoutPair, params: &SimParams) -> Result<PureStateReal4> {
    if !params.measured() {
        return Ok(*q);
    }
    let k = params.dt / (4.0 * params.tau);
    let amps = q.to_array();
    let mut logw = [0.0; 4];
    let mut max = f64::NEG_INFINITY;
    for i in 0..4 {
        logw[i] = -k * ((ro.r - Z1[i]).powi(2) + (ro.w - Z2[i]).powi(2));
        if amps[i] != 0.0 && logw[i] > max {
            max = logw[i];
        }
    }
    if !max.is_finite() {
        return Err(Error::NormUnderflow);
    }
    let out = PureStateReal4::from_array(std::array::from_fn(|i| {
        if amps[i] == 0.0 {
            0.0
        } else {
            amps[i] * (logw[i] - max).exp()
        }
    }));
    let n = out.norm();
    if !(n > 1e-150) || !n.is_finite() {
        return Err(Error::NormUnderflow);
    }
    normalize(out)
}

/// Generator of the coupling plus local noise rotations, rows `(a, c, α, γ)`:
/// `ȧ = −cλ − αε, ċ = α + aλ − γε, α̇ = −c + aε − γλ, γ̇ = cε + αλ`.
pub fn generator(noise: UnitaryNoisePair) -> Antisym4 {
    let UnitaryNoisePair { epsilon: e, lambda: l } = noise;
    Antisym4([-l, -e, 0.0, 1.0, -e, -l])
}

/// Advances `q` by the exact orthogonal map `exp(G δt)`.
pub fn apply_unitary(q: &PureStateReal4, noise: UnitaryNoisePair, dt: f64) -> PureStateReal4 {
    if dt == 0.0 {
        return *q;
    }
    let u = generator(noise).scaled(dt).exp();
    PureStateReal4::from_array(crate::rotation::mat_vec(&u, q.to_array()))
}

/// One full Kraus step: readouts, back-action, noise draw, unitary.
pub fn step<R: Rng + ?Sized>(
    q: &PureStateReal4,
    params: &SimParams,
    rng: &mut R,
) -> Result<(PureStateReal4, ReadoutPair, UnitaryNoisePair)> {
    let ro = sample_readouts(q, params, rng);
    let measured = apply_measurement(q, ro, params)?;
    let noise = sample_unitary_noise(params, rng);
    let next = normalize(apply_unitary(&measured, noise, params.dt))?;
    Ok((next, ro, noise))
}

/// Integrates `T/δt` Kraus steps from `q0`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    q0: PureStateReal4,
    params: &SimParams,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    run_stepper(q0, params, rng, |q, p, r| step(q, p, r))
}

pub(crate) fn run_stepper<R, F>(q0: PureStateReal4, params: &SimParams, rng: &mut R, mut f: F) -> Result<TrajectoryRecord>
where
    R: Rng + ?Sized,
    F: FnMut(&PureStateReal4, &SimParams, &mut R) -> Result<(PureStateReal4, ReadoutPair, UnitaryNoisePair)>,
{
    params.validate()?;
    let q0 = normalize(q0)?;
    let n = params.n_steps();
    let mut rec = TrajectoryRecord::with_capacity(n + 1);
    rec.push(0.0, q0, ReadoutPair::default(), UnitaryNoisePair::default());
    let mut q = q0;
    for k in 0..n {
        let (next, ro, nz) = f(&q, params, rng).map_err(|e| Error::TrajectoryAborted {
            step: k,
            source: Box::new(e),
        })?;
        q = next;
        rec.push((k + 1) as f64 * params.dt, q, ro, nz);
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn noise_free_limit_is_zero() {
        let p = SimParams::new(1.0, 0.0, 0.02, 1.0);
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_unitary_noise(&p, &mut rng), UnitaryNoisePair::default());
        }
    }

    #[test]
    fn noise_variance_is_gamma_over_dt() {
        let p = SimParams::new(1.0, 3.0, 0.02, 1.0);
        let mut rng = stream(2, 0);
        let draws: Vec<UnitaryNoisePair> = (0..100_000).map(|_| sample_unitary_noise(&p, &mut rng)).collect();
        let n = draws.len() as f64;
        for xs in [
            draws.iter().map(|d| d.epsilon).collect::<Vec<_>>(),
            draws.iter().map(|d| d.lambda).collect::<Vec<_>>(),
        ] {
            let (m, v) = mean_var(&xs);
            // var of the sample variance is 2σ⁴/(n−1)
            assert_abs_diff_eq!(v, 150.0, epsilon = 3.0 * 150.0 * (2.0 / n).sqrt());
            assert_abs_diff_eq!(m, 0.0, epsilon = 3.0 * (150.0 / n).sqrt());
        }
    }

    #[test]
    fn readout_statistics() {
        let p = SimParams::new(0.5, 0.0, 0.02, 1.0);
        let var = p.tau / p.dt;
        let n = 100_000;
        let tol = 4.0 * (var / n as f64).sqrt();
        for (q, mr, mw) in [
            (PureStateReal4::new(1.0, 0.0, 0.0, 0.0), 1.0, 1.0),
            (PureStateReal4::new(0.0, 1.0, 0.0, 0.0), 1.0, -1.0),
            (PureStateReal4::uniform(), 0.0, 0.0),
        ] {
            let mut rng = stream(3, 0);
            let ro: Vec<ReadoutPair> = (0..n).map(|_| sample_readouts(&q, &p, &mut rng)).collect();
            let (m, v) = mean_var(&ro.iter().map(|x| x.r).collect::<Vec<_>>());
            assert_abs_diff_eq!(m, mr, epsilon = tol);
            let mixture_var = var + 1.0 - mr * mr;
            assert_abs_diff_eq!(v, mixture_var, epsilon = 4.0 * mixture_var * (2.0 / n as f64).sqrt());
            let (m, _) = mean_var(&ro.iter().map(|x| x.w).collect::<Vec<_>>());
            assert_abs_diff_eq!(m, mw, epsilon = tol);
        }
    }

    #[test]
    fn measurement_examples() {
        let p = SimParams::new(0.3, 0.0, 0.02, 1.0);
        let q = apply_measurement(&PureStateReal4::uniform(), ReadoutPair { r: 0.0, w: 0.0 }, &p).unwrap();
        for x in q.to_array() {
            assert_abs_diff_eq!(x, 0.5, epsilon = 1e-15);
        }
        let inf = SimParams::new(f64::INFINITY, 0.0, 0.02, 1.0);
        let q0 = crate::state::normalize(PureStateReal4::new(0.3, -0.2, 0.9, 0.1)).unwrap();
        assert_eq!(apply_measurement(&q0, ReadoutPair { r: 40.0, w: -3.0 }, &inf).unwrap(), q0);
        // |00> and |01> share z₁ = +1; a strong r-readout cannot split them.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let strong = SimParams::new(0.01, 0.0, 0.02, 1.0);
        let q = apply_measurement(&PureStateReal4::new(s, s, 0.0, 0.0), ReadoutPair { r: 1.0, w: 0.0 }, &strong).unwrap();
        assert_abs_diff_eq!(q.a, s, epsilon = 1e-15);
        assert_abs_diff_eq!(q.c, s, epsilon = 1e-15);
    }

    #[test]
    fn measurement_underflow_is_an_error_not_nan() {
        let p = SimParams::new(1e-6, 0.0, 1.0, 1.0);
        let q = PureStateReal4::new(1.0, 0.0, 0.0, 0.0);
        let out = apply_measurement(&q, ReadoutPair { r: -1e6, w: -1e6 }, &p).unwrap();
        assert!(out.is_normalized());
        let bad = PureStateReal4::new(f64::NAN, 0.0, 0.0, 0.0);
        assert!(apply_measurement(&bad, ReadoutPair::default(), &p).is_err());
    }

    #[test]
    fn unitary_rotation_closed_forms() {
        let q = apply_unitary(&PureStateReal4::uniform(), UnitaryNoisePair::default(), FRAC_PI_2);
        let expect = [0.5, 0.5, -0.5, 0.5];
        for (x, e) in q.to_array().iter().zip(expect) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(concurrence_sq(&q), 1.0, epsilon = 1e-14);
        // Half a rotation period flips the (c, α) block; C² is back to zero.
        let q = apply_unitary(&PureStateReal4::uniform(), UnitaryNoisePair::default(), PI);
        for (x, e) in q.to_array().iter().zip([0.5, -0.5, -0.5, 0.5]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(concurrence_sq(&q), 0.0, epsilon = 1e-14);
        let q = apply_unitary(&PureStateReal4::uniform(), UnitaryNoisePair::default(), 2.0 * PI);
        for x in q.to_array() {
            assert_abs_diff_eq!(x, 0.5, epsilon = 1e-14);
        }
        let q0 = PureStateReal4::new(0.1, 0.7, 0.1, 0.7);
        let nz = UnitaryNoisePair { epsilon: 3.0, lambda: -1.0 };
        assert_eq!(apply_unitary(&q0, nz, 0.0), q0);
    }

    #[test]
    fn unitary_matches_generator_to_first_order() {
        let q = crate::state::normalize(PureStateReal4::new(0.3, -0.2, 0.9, 0.1)).unwrap();
        let nz = UnitaryNoisePair { epsilon: 0.7, lambda: -1.3 };
        let h = 1e-6;
        let moved = apply_unitary(&q, nz, h).to_array();
        let (a, c, al, g) = (q.a, q.c, q.alpha, q.gamma);
        let (e, l) = (nz.epsilon, nz.lambda);
        let rate = [-c * l - al * e, al + a * l - g * e, -c + a * e - g * l, c * e + al * l];
        for i in 0..4 {
            assert_abs_diff_eq!((moved[i] - q.to_array()[i]) / h, rate[i], epsilon = 1e-5);
        }
    }

    #[test]
    fn unmonitored_noiseless_trajectory_is_sin4() {
        let p = SimParams::new(f64::INFINITY, 0.0, 0.02, 2.0 * PI);
        let rec = simulate_trajectory(PureStateReal4::uniform(), &p, &mut stream(0, 0)).unwrap();
        for (t, c2) in rec.times.iter().zip(&rec.concurrence_sq) {
            assert_abs_diff_eq!(*c2, t.sin().powi(4), epsilon = 1e-10);
        }
        for q in &rec.states {
            assert_abs_diff_eq!(q.a, 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(q.gamma, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn weak_measurement_trajectory_is_near_sin4() {
        let p = SimParams::new(1e9, 0.0, 0.02, 2.0 * PI);
        let rec = simulate_trajectory(PureStateReal4::uniform(), &p, &mut stream(0, 0)).unwrap();
        let err = rec
            .times
            .iter()
            .zip(&rec.concurrence_sq)
            .map(|(t, c2)| (c2 - t.sin().powi(4)).abs())
            .fold(0.0, f64::max);
        // back-action random walk of size sqrt(T/τ) ≈ 8e-5
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn one_step_from_00_without_noise_or_measurement() {
        let p = SimParams::new(f64::INFINITY, 0.0, 0.02, 0.02);
        let (q, _, _) = step(&PureStateReal4::new(1.0, 0.0, 0.0, 0.0), &p, &mut stream(0, 0)).unwrap();
        assert_eq!(q, PureStateReal4::new(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn trajectories_are_deterministic() {
        let p = SimParams::new(0.2, 3.0, 0.02, 2.0);
        let a = simulate_trajectory(PureStateReal4::uniform(), &p, &mut stream(9, 4)).unwrap();
        let b = simulate_trajectory(PureStateReal4::uniform(), &p, &mut stream(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), p.n_steps() + 1);
        assert!(a.states.iter().all(|q| q.is_normalized()));
        assert_eq!(a.readouts.len(), a.states.len());
    }

    #[test]
    fn mean_readout_tracks_population() {
        // Ensemble mean of r at step k equals the mean of <σ_z1> over the states feeding that step.
        let p = SimParams::new(0.5, 0.5, 0.02, 0.4);
        let n = 20_000;
        let k = 10;
        let (mut r, mut z) = (Vec::new(), 0.0);
        for i in 0..n {
            let rec = simulate_trajectory(PureStateReal4::uniform(), &p, &mut stream(4, i)).unwrap();
            r.push(rec.readouts[k + 1].r);
            z += rec.states[k].mean_z1();
        }
        let (m, v) = mean_var(&r);
        assert_abs_diff_eq!(m, z / n as f64, epsilon = 4.0 * (v / n as f64).sqrt());
    }

    #[test]
    fn measurement_only_spreads_populations() {
        let p = SimParams::new(0.5, 0.0, 0.02, 1.0);
        let n = 2000;
        let checkpoints = [0usize, 10, 25, 50];
        let mut var = vec![0.0; checkpoints.len()];
        for i in 0..n {
            let mut rng = stream(8, i);
            let mut q = PureStateReal4::uniform();
            for s in 0..=50 {
                if let Some(j) = checkpoints.iter().position(|&c| c == s) {
                    let pops = q.to_array().map(|x| x * x);
                    var[j] += pops.iter().map(|x| (x - 0.25).powi(2)).sum::<f64>() / 4.0;
                }
                let ro = sample_readouts(&q, &p, &mut rng);
                q = apply_measurement(&q, ro, &p).unwrap();
            }
        }
        assert!(var.windows(2).all(|w| w[1] > w[0]), "{var:?}");
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = [
            SimParams::new(0.0, 1.0, 0.02, 1.0),
            SimParams::new(1.0, -1.0, 0.02, 1.0),
            SimParams::new(1.0, 1.0, 0.0, 1.0),
            SimParams::new(1.0, 1.0, 0.02, -1.0),
            SimParams::new(1.0, 1.0, 0.02, 1.0).with_traj(0),
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
        }
    }
}
