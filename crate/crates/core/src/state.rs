//! Real two-qubit pure states, concurrence, and the ergodic reference measure.
//!
//! A state is `a|00> + c|01> + alpha|10> + gamma|11>` with real amplitudes on
//! the unit 3-sphere. The σ_z eigenvalue of qubit 1 is +1 on `a, c` and −1 on
//! `alpha, gamma`; qubit 2 is +1 on `a, alpha` and −1 on `c, gamma`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|q|² − 1` for a state to count as normalized.
pub const NORM_TOL: f64 = 1e-9;

/// σ_z eigenvalues of qubit 1 for the basis order `|00>, |01>, |10>, |11>`.
pub const Z1: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
/// σ_z eigenvalues of qubit 2.
pub const Z2: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureStateReal4 {
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl PureStateReal4 {
    pub const fn new(a: f64, c: f64, alpha: f64, gamma: f64) -> Self {
        Self { a, c, alpha, gamma }
    }

    /// The unentangled preparation `(½, ½, ½, ½)` used throughout.
    pub const fn uniform() -> Self {
        Self::new(0.5, 0.5, 0.5, 0.5)
    }

    pub const fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.a, self.c, self.alpha, self.gamma]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a * self.a + self.c * self.c + self.alpha * self.alpha + self.gamma * self.gamma
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.a * other.a + self.c * other.c + self.alpha * other.alpha + self.gamma * other.gamma
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Population-weighted mean of the qubit-1 σ_z eigenvalue.
    pub fn mean_z1(&self) -> f64 {
        self.a * self.a + self.c * self.c - self.alpha * self.alpha - self.gamma * self.gamma
    }

    /// Population-weighted mean of the qubit-2 σ_z eigenvalue.
    pub fn mean_z2(&self) -> f64 {
        self.a * self.a - self.c * self.c + self.alpha * self.alpha - self.gamma * self.gamma
    }

    pub fn concurrence(&self) -> Concurrence {
        concurrence(self)
    }
}

impl std::ops::Neg for PureStateReal4 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.a, -self.c, -self.alpha, -self.gamma)
    }
}

/// Hyperspherical coordinates on the real 3-sphere:
/// `a = cos ψ, c = sin ψ cos θ, alpha = sin ψ sin θ cos φ, gamma = sin ψ sin θ sin φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicAngles {
    pub psi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl ErgodicAngles {
    pub fn to_state(self) -> PureStateReal4 {
        let (sp, cp) = self.psi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        let (sf, cf) = self.phi.sin_cos();
        PureStateReal4::new(cp, sp * ct, sp * st * cf, sp * st * sf)
    }

    pub fn from_state(q: &PureStateReal4) -> Self {
        let psi = q.a.clamp(-1.0, 1.0).acos();
        let rest = (q.alpha * q.alpha + q.gamma * q.gamma).sqrt();
        let theta = rest.atan2(q.c);
        let phi = q.gamma.atan2(q.alpha).rem_euclid(2.0 * PI);
        Self { psi, theta, phi }
    }
}

/// Two-qubit concurrence, always in `[0, 1]` for unit states.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Concurrence(pub f64);

impl Concurrence {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn squared(self) -> f64 {
        self.0 * self.0
    }
}

pub fn normalize(q: PureStateReal4) -> Result<PureStateReal4> {
    let n = q.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(PureStateReal4::new(q.a / n, q.c / n, q.alpha / n, q.gamma / n))
}

/// `C = 2 |a γ − α c|`.
pub fn concurrence(q: &PureStateReal4) -> Concurrence {
    Concurrence(2.0 * (q.a * q.gamma - q.alpha * q.c).abs())
}

/// Squared concurrence, the quantity averaged throughout the crate.
pub fn concurrence_sq(q: &PureStateReal4) -> f64 {
    let d = q.a * q.gamma - q.alpha * q.c;
    4.0 * d * d
}

/// Draws a state uniformly from the real 3-sphere by inverting the marginal
/// CDFs of `dμ = sin θ sin² ψ dθ dφ dψ`.
pub fn sample_ergodic<R: Rng + ?Sized>(rng: &mut R) -> PureStateReal4 {
    let psi = invert_psi_cdf(rng.random::<f64>());
    let theta = (1.0 - 2.0 * rng.random::<f64>()).clamp(-1.0, 1.0).acos();
    let phi = 2.0 * PI * rng.random::<f64>();
    ErgodicAngles { psi, theta, phi }.to_state()
}

/// Marginal CDF of ψ under the uniform measure: `(ψ − sin ψ cos ψ) / π`.
pub fn psi_cdf(psi: f64) -> f64 {
    (psi - psi.sin() * psi.cos()) / PI
}

fn invert_psi_cdf(u: f64) -> f64 {
    // The CDF is monotone with derivative (2/π) sin²ψ; bracketed Newton.
    let (mut lo, mut hi) = (0.0, PI);
    let mut x = PI * u;
    for _ in 0..60 {
        let f = psi_cdf(x) - u;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = 2.0 / PI * x.sin().powi(2);
        let next = x - f / d;
        x = if d > 1e-300 && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Ergodic average of `C²`, exactly 1/3.
pub fn ergodic_mean_c2() -> f64 {
    1.0 / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normalize_examples() {
        let q = normalize(PureStateReal4::new(2.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(q, PureStateReal4::new(1.0, 0.0, 0.0, 0.0));
        let q = normalize(PureStateReal4::uniform()).unwrap();
        assert_abs_diff_eq!(q.a, 0.5, epsilon = 1e-15);
        let q = normalize(PureStateReal4::new(1.0, 1.0, 1.0, 1.0)).unwrap();
        for x in q.to_array() {
            assert_abs_diff_eq!(x, 0.5, epsilon = 1e-15);
        }
        assert_eq!(
            normalize(PureStateReal4::new(0.0, 0.0, 0.0, 0.0)),
            Err(Error::ZeroNorm)
        );
        assert_eq!(
            normalize(PureStateReal4::new(f64::NAN, 0.0, 0.0, 0.0)),
            Err(Error::ZeroNorm)
        );
    }

    #[test]
    fn concurrence_examples() {
        assert_abs_diff_eq!(concurrence(&PureStateReal4::uniform()).0, 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureStateReal4::new(s, 0.0, 0.0, s);
        assert_abs_diff_eq!(concurrence(&bell).0, 1.0, epsilon = 1e-15);
        assert_eq!(concurrence(&PureStateReal4::new(1.0, 0.0, 0.0, 0.0)).0, 0.0);
    }

    #[test]
    fn basis_states_have_zero_c2() {
        let mean: f64 = (0..4)
            .map(|i| {
                let mut v = [0.0; 4];
                v[i] = 1.0;
                concurrence_sq(&PureStateReal4::from_array(v))
            })
            .sum::<f64>()
            / 4.0;
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn angles_round_trip() {
        let ang = ErgodicAngles { psi: 1.1, theta: 2.0, phi: 4.0 };
        let back = ErgodicAngles::from_state(&ang.to_state());
        assert_abs_diff_eq!(back.psi, ang.psi, epsilon = 1e-12);
        assert_abs_diff_eq!(back.theta, ang.theta, epsilon = 1e-12);
        assert_abs_diff_eq!(back.phi, ang.phi, epsilon = 1e-12);
    }

    #[test]
    fn ergodic_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut c2, mut a, mut a2) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let q = sample_ergodic(&mut rng);
            c2 += concurrence_sq(&q);
            a += q.a;
            a2 += q.a * q.a;
        }
        let n = n as f64;
        assert_abs_diff_eq!(c2 / n, ergodic_mean_c2(), epsilon = 0.002);
        // sd(a) = 1/2, so 5σ on the mean is 0.0025.
        assert_abs_diff_eq!(a / n, 0.0, epsilon = 0.0025);
        assert_abs_diff_eq!(a2 / n, 0.25, epsilon = 0.002);
    }

    #[test]
    fn psi_marginal_passes_ks() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 100_000;
        let mut psis: Vec<f64> = (0..n)
            .map(|_| ErgodicAngles::from_state(&sample_ergodic(&mut rng)).psi)
            .collect();
        psis.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let d = psis
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let f = psi_cdf(p);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic.
        assert!(d < 1.628 / (n as f64).sqrt(), "KS D = {d}");
    }

    fn unit_state() -> impl Strategy<Value = PureStateReal4> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
            .prop_map(|v| normalize(PureStateReal4::from_array(v)).unwrap())
    }

    proptest! {
        #[test]
        fn concurrence_bounded_and_sign_invariant(q in unit_state()) {
            let c = concurrence(&q).0;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
            prop_assert_eq!(c, concurrence(&-q).0);
        }

        #[test]
        fn normalize_keeps_direction(v in prop::array::uniform4(-5.0f64..5.0)) {
            let q = PureStateReal4::from_array(v);
            prop_assume!(q.norm() > 1e-6);
            let u = normalize(q).unwrap();
            prop_assert!(u.is_normalized());
            prop_assert!((u.dot(&q) - q.norm()).abs() < 1e-9 * q.norm().max(1.0));
        }
    }
}
