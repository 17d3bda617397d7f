//! Exact exponential of a real 4×4 antisymmetric matrix.
//!
//! Any such matrix splits into commuting self-dual and anti-self-dual parts
//! `A = A₊ + A₋` with `A±² = −θ±² I`, so
//! `exp(A) = (cos θ₊ I + sinc θ₊ A₊)(cos θ₋ I + sinc θ₋ A₋)`.

pub type Mat4 = [[f64; 4]; 4];

/// Upper-triangle entries `[a01, a02, a03, a12, a13, a23]` of an antisymmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Antisym4(pub [f64; 6]);

impl Antisym4 {
    pub fn scaled(self, s: f64) -> Self {
        Self(self.0.map(|x| x * s))
    }

    pub fn to_matrix(self) -> Mat4 {
        let [a01, a02, a03, a12, a13, a23] = self.0;
        [
            [0.0, a01, a02, a03],
            [-a01, 0.0, a12, a13],
            [-a02, -a12, 0.0, a23],
            [-a03, -a13, -a23, 0.0],
        ]
    }

    pub fn apply(self, v: [f64; 4]) -> [f64; 4] {
        mat_vec(&self.to_matrix(), v)
    }

    pub fn exp(self) -> Mat4 {
        let [a01, a02, a03, a12, a13, a23] = self.0;
        let mut factors = [[[0.0; 4]; 4]; 2];
        for (f, sgn) in factors.iter_mut().zip([1.0, -1.0]) {
            let u1 = 0.5 * (a01 + sgn * a23);
            let u2 = 0.5 * (a02 - sgn * a13);
            let u3 = 0.5 * (a03 + sgn * a12);
            let half = Antisym4([u1, u2, u3, sgn * u3, -sgn * u2, sgn * u1]).to_matrix();
            let theta = (u1 * u1 + u2 * u2 + u3 * u3).sqrt();
            let (cos, sinc) = if theta < 1e-8 {
                (1.0 - theta * theta / 2.0, 1.0 - theta * theta / 6.0)
            } else {
                (theta.cos(), theta.sin() / theta)
            };
            for i in 0..4 {
                for j in 0..4 {
                    f[i][j] = sinc * half[i][j] + if i == j { cos } else { 0.0 };
                }
            }
        }
        mat_mul(&factors[0], &factors[1])
    }
}

pub fn mat_vec(m: &Mat4, v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
    out
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Scaling-and-squaring Taylor series, independent of the split above.
    fn expm_series(m: &Mat4) -> Mat4 {
        let norm: f64 = m.iter().flatten().map(|x| x.abs()).sum();
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let s = 0.5f64.powi(squarings);
        let a: Mat4 = m.map(|r| r.map(|x| x * s));
        let mut term = [[0.0; 4]; 4];
        let mut sum = [[0.0; 4]; 4];
        for i in 0..4 {
            term[i][i] = 1.0;
            sum[i][i] = 1.0;
        }
        for k in 1..30 {
            term = mat_mul(&term, &a).map(|r| r.map(|x| x / k as f64));
            for i in 0..4 {
                for j in 0..4 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            sum = mat_mul(&sum, &sum);
        }
        sum
    }

    proptest! {
        #[test]
        fn matches_series(v in prop::array::uniform6(-3.0f64..3.0)) {
            let a = Antisym4(v);
            let e = a.exp();
            let r = expm_series(&a.to_matrix());
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert!((e[i][j] - r[i][j]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn is_orthogonal(v in prop::array::uniform6(-10.0f64..10.0)) {
            let e = Antisym4(v).exp();
            for i in 0..4 {
                for j in 0..4 {
                    let d: f64 = (0..4).map(|k| e[k][i] * e[k][j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((d - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_is_identity() {
        let e = Antisym4::default().exp();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(e[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }
}
