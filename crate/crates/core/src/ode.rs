//! Adaptive Dormand–Prince 5(4) integrator with output on a prescribed grid.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step magnitude before the integration is declared stiff.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_min: 1e-8,
            max_steps: 2_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `(t_out[0], y0)` and returns `y` at every
/// entry of `t_out`, which must be monotone (either direction).
///
/// `guard` is called after every accepted step; returning `Some(reason)`
/// aborts with [`Error::Diverged`].
pub fn integrate<const N: usize, F, G>(
    mut f: F,
    y0: [f64; N],
    t_out: &[f64],
    opts: &OdeOptions,
    mut guard: G,
) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]) -> Option<String>,
{
    let mut out = Vec::with_capacity(t_out.len());
    if t_out.is_empty() {
        return Ok(out);
    }
    let mut t = t_out[0];
    let mut y = y0;
    out.push(y);
    let span = t_out[t_out.len() - 1] - t;
    if span == 0.0 {
        out.resize(t_out.len(), y);
        return Ok(out);
    }
    let dir = span.signum();
    let mut k1 = f(t, &y);
    let mut h = initial_step(&y, &k1, opts, span.abs()) * dir;
    let mut steps = 0usize;
    for &target in &t_out[1..] {
        if (target - t) * dir < 0.0 {
            return Err(Error::InvalidParameter("output grid is not monotone".into()));
        }
        while (target - t) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Diverged {
                    t,
                    reason: "step budget exhausted".into(),
                });
            }
            let remaining = target - t;
            let last = h.abs() >= remaining.abs();
            let h_try = if last { remaining } else { h };
            let (y_new, k_last, err) = dp_step(&mut f, t, &y, &k1, h_try, opts);
            if !err.is_finite() {
                h *= 0.25;
                if h.abs() < opts.h_min {
                    return Err(Error::Diverged {
                        t,
                        reason: "non-finite derivative".into(),
                    });
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + h_try };
                y = y_new;
                k1 = k_last;
                if let Some(reason) = guard(t, &y) {
                    return Err(Error::Diverged { t, reason });
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = h_try * grow;
                } else {
                    h = h.abs().max(h_try.abs() * grow) * dir;
                }
            } else {
                let shrink = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                h = h_try * shrink;
                if h.abs() < opts.h_min && remaining.abs() > opts.h_min {
                    return Err(Error::Diverged {
                        t,
                        reason: format!("step size fell below {:e}", opts.h_min),
                    });
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

fn initial_step<const N: usize>(y: &[f64; N], k1: &[f64; N], opts: &OdeOptions, span: f64) -> f64 {
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = rms(|i| y[i] / scale(i), N);
    let d1 = rms(|i| k1[i] / scale(i), N);
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).max(opts.h_min)
}

fn rms(v: impl Fn(usize) -> f64, n: usize) -> f64 {
    ((0..n).map(|i| v(i).powi(2)).sum::<f64>() / n as f64).sqrt()
}

fn dp_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    opts: &OdeOptions,
) -> ([f64; N], [f64; N], f64)
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 7];
    k[0] = *k1;
    for s in 1..7 {
        let ys: [f64; N] = std::array::from_fn(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>());
        k[s] = f(t + C[s] * h, &ys);
    }
    let y5: [f64; N] = std::array::from_fn(|i| y[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>());
    let err = rms(
        |i| {
            let e = h * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>();
            e / (opts.atol + opts.rtol * y[i].abs().max(y5[i].abs()))
        },
        N,
    );
    // FSAL: the seventh stage is f(t + h, y5).
    (y5, k[6], err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn no_guard<const N: usize>(_: f64, _: &[f64; N]) -> Option<String> {
        None
    }

    #[test]
    fn harmonic_oscillator() {
        let ts: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let ys = integrate(|_, y| [y[1], -y[0]], [1.0, 0.0], &ts, &OdeOptions::default(), no_guard).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert_abs_diff_eq!(y[0], t.cos(), epsilon = 1e-9);
            assert_abs_diff_eq!(y[1], -t.sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn backward_and_exponential() {
        let ts = [2.0, 1.0, 0.0];
        let ys = integrate(|_, y| [y[0]], [2f64.exp()], &ts, &OdeOptions::default(), no_guard).unwrap();
        assert_abs_diff_eq!(ys[2][0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ys[1][0], 1f64.exp(), epsilon = 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let ts = [0.0, 2.0];
        let r = integrate(
            |_, y| [y[0] * y[0]],
            [1.0],
            &ts,
            &OdeOptions::default(),
            |_, y| (y[0].abs() > 1e6).then(|| "too large".to_string()),
        );
        assert!(matches!(r, Err(Error::Diverged { .. })));
    }

    #[test]
    fn zero_span_returns_initial() {
        let ys = integrate(|_, y| [y[0]], [3.0], &[0.0, 0.0], &OdeOptions::default(), no_guard).unwrap();
        assert_eq!(ys, vec![[3.0], [3.0]]);
    }
}
