//! Weak-coupling analytics: the free propagator, the linear and five-vertex
//! approximations of `<C²>(t)`, and the interaction-vertex catalog.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kraus::SimParams;
use crate::rotation::Mat4;
use crate::sde::{diffusion, drift, printed_sde, Mat4x4, Vec4};
use crate::state::{sample_ergodic, PureStateReal4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorKernel {
    pub delta_t: f64,
    pub tau: f64,
    pub gamma: f64,
    pub matrix: Mat4,
}

/// Fundamental solution of the bilinear dynamics: decay `Γ` on `a`, a unit
/// rotation of `(c, α)` decaying at `Γ + 1/2τ`, decay `Γ + 1/τ` on `γ`.
/// Vanishes for `Δt ≤ 0`.
pub fn free_propagator(delta_t: f64, params: &SimParams) -> PropagatorKernel {
    let mut m = [[0.0; 4]; 4];
    if delta_t > 0.0 {
        let it = params.inv_tau();
        let g = params.gamma;
        let (s, c) = delta_t.sin_cos();
        let mid = (-(g + 0.5 * it) * delta_t).exp();
        m[0][0] = (-g * delta_t).exp();
        m[1][1] = mid * c;
        m[1][2] = mid * s;
        m[2][1] = -mid * s;
        m[2][2] = mid * c;
        m[3][3] = (-(g + it) * delta_t).exp();
    }
    PropagatorKernel {
        delta_t,
        tau: params.tau,
        gamma: params.gamma,
        matrix: m,
    }
}

/// `sin⁴ t · e^{−2t(2Γ + 1/τ)}`.
pub fn linear_c2(t: f64, params: &SimParams) -> f64 {
    t.sin().powi(4) * (-2.0 * t * (2.0 * params.gamma + params.inv_tau())).exp()
}

/// The five-vertex correction added to [`linear_c2`] by [`closed_form_c2`].
pub fn closed_form_correction(t: f64, params: &SimParams) -> f64 {
    let g = params.gamma;
    let (s2, c2) = (2.0 * t).sin_cos();
    let (s4, c4) = (4.0 * t).sin_cos();
    if !params.measured() {
        // τ → ∞ limit of the bracket divided by 8τ.
        return (-4.0 * g * t).exp() * g * (2.0 * t - s2 - 0.5 * s4 + 2.0 * t * c2);
    }
    let tau = params.tau;
    let it = 1.0 / tau;
    let damp = (-2.0 * t * (2.0 * g + it)).exp();
    // e^{−2t(2Γ+1/τ)} sinh(t/τ) without overflow.
    let damped_sinh = -0.5 * (-(4.0 * g + it) * t).exp() * (-2.0 * t * it).exp_m1();
    let d = 4.0 * tau * tau + 1.0;
    let bracket = -32.0 * g * tau.powi(3) * s2 / d - 4.0 * g * tau * s4 + 2.0 * t * (8.0 * g * tau - 5.0) * c2 + 9.0 * t + s2
        - s4
        + 3.0 * t * c4;
    (64.0 * g * tau.powi(4) / d * damped_sinh + damp * bracket) / (8.0 * tau)
}

pub fn closed_form_c2(t: f64, params: &SimParams) -> f64 {
    linear_c2(t, params) + closed_form_correction(t, params)
}

/// Where a vertex acts: along the whole path, or only at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Locality {
    Bulk,
    Initial,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VertexTerm {
    /// `(n_a, n_c, n_α, n_γ, m_a, m_c, m_α, m_γ)`.
    pub exponents: [u32; 8],
    pub coefficient: Ratio<i64>,
    pub gamma_power: u32,
    pub inv_tau_power: u32,
    pub locality: Locality,
}

impl VertexTerm {
    pub fn state_degree(&self) -> u32 {
        self.exponents[..4].iter().sum()
    }

    pub fn momentum_degree(&self) -> u32 {
        self.exponents[4..].iter().sum()
    }

    pub fn eval(&self, q: &PureStateReal4, p: &Vec4, params: &SimParams) -> f64 {
        let x = q.to_array();
        let mono: f64 = (0..4)
            .map(|i| x[i].powi(self.exponents[i] as i32) * p[i].powi(self.exponents[i + 4] as i32))
            .product();
        let c = *self.coefficient.numer() as f64 / *self.coefficient.denom() as f64;
        c * params.gamma.powi(self.gamma_power as i32) * params.inv_tau().powi(self.inv_tau_power as i32) * mono
    }
}

impl fmt::Display for VertexTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.exponents {
            write!(f, "{e} ")?;
        }
        write!(f, "{} {} {}", self.coefficient, self.gamma_power, self.inv_tau_power)?;
        if self.locality == Locality::Initial {
            f.write_str(" delta0")?;
        }
        Ok(())
    }
}

impl FromStr for VertexTerm {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let locality = match fields.len() {
            11 => Locality::Bulk,
            12 if fields[11] == "delta0" => Locality::Initial,
            12 => return Err(format!("unknown tag `{}`", fields[11])),
            n => return Err(format!("expected 11 or 12 fields, found {n}")),
        };
        let int = |s: &str| s.parse::<u32>().map_err(|e| format!("bad integer `{s}`: {e}"));
        let mut exponents = [0u32; 8];
        for (slot, s) in exponents.iter_mut().zip(&fields[..8]) {
            *slot = int(s)?;
        }
        let coefficient: Ratio<i64> = fields[8].parse().map_err(|e| format!("bad coefficient `{}`: {e}", fields[8]))?;
        if *coefficient.numer() == 0 {
            return Err("zero coefficient".into());
        }
        Ok(Self {
            exponents,
            coefficient,
            gamma_power: int(fields[9])?,
            inv_tau_power: int(fields[10])?,
            locality,
        })
    }
}

/// The catalog shipped with the crate.
pub const VERTEX_CATALOG: &str = include_str!("../data/vertex_catalog.txt");

pub const CATALOG_SIZE: usize = 127;

pub fn load_vertex_catalog() -> Result<Vec<VertexTerm>> {
    parse_catalog(VERTEX_CATALOG)
}

pub fn load_vertex_catalog_from(path: &Path) -> Result<Vec<VertexTerm>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Catalog {
        line: 0,
        msg: format!("{}: {e}", path.display()),
    })?;
    parse_catalog(&text)
}

/// Parses and validates a catalog: `#` starts a comment, terms must be
/// distinct, have `Σn ≤ 6` and momentum degree 1 or 2.
pub fn parse_catalog(text: &str) -> Result<Vec<VertexTerm>> {
    let mut terms = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Catalog { line: k + 1, msg };
        let term: VertexTerm = line.parse().map_err(err)?;
        if term.state_degree() > 6 {
            return Err(err(format!("state degree {} exceeds 6", term.state_degree())));
        }
        if !(1..=2).contains(&term.momentum_degree()) {
            return Err(err(format!("momentum degree {} is not 1 or 2", term.momentum_degree())));
        }
        if !seen.insert((term.exponents, term.gamma_power, term.inv_tau_power, term.locality)) {
            return Err(err("duplicate term".into()));
        }
        terms.push(term);
    }
    Ok(terms)
}

pub fn serialize_catalog(terms: &[VertexTerm]) -> String {
    let mut out = String::new();
    for t in terms {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// Sum of the bulk vertices at one point of phase space.
pub fn interaction_integrand(terms: &[VertexTerm], q: &PureStateReal4, p: &Vec4, params: &SimParams) -> f64 {
    terms
        .iter()
        .filter(|t| t.locality == Locality::Bulk)
        .map(|t| t.eval(q, p, params))
        .sum()
}

/// Linear part of the drift kept in the free action.
pub fn free_drift_linear(q: &PureStateReal4, params: &SimParams) -> Vec4 {
    let (g, it) = (params.gamma, params.inv_tau());
    [
        -g * q.a,
        q.alpha - g * q.c - 0.5 * it * q.c,
        -q.c - g * q.alpha - 0.5 * it * q.alpha,
        -g * q.gamma - it * q.gamma,
    ]
}

/// `−p·(f − f_lin) + ½ pᵀ B Bᵀ p` for a drift `f` and diffusion `B`.
pub fn reference_integrand(f: &Vec4, b: &Mat4x4, q: &PureStateReal4, p: &Vec4, params: &SimParams) -> f64 {
    let fl = free_drift_linear(q, params);
    let lin: f64 = (0..4).map(|i| p[i] * (f[i] - fl[i])).sum();
    let quad: f64 = (0..4)
        .map(|j| {
            let col: f64 = (0..4).map(|i| b[i][j] * p[i]).sum();
            col * col
        })
        .sum();
    -lin + 0.5 * quad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogResidualReport {
    pub n_samples: usize,
    pub n_terms: usize,
    /// Catalog against the re-derived drift and diffusion.
    pub max_abs: f64,
    pub rms: f64,
    /// Catalog against the coefficients as typeset.
    pub printed_max_abs: f64,
    pub printed_rms: f64,
    /// Largest catalog value at `p = 0`; every vertex carries momentum.
    pub p_zero_max: f64,
    /// Largest deviation of the `m = 2` sector from exact quadratic scaling under `p → 2p`.
    pub quadratic_scaling_max: f64,
}

/// Compares the catalog with the interaction integrand built from the SDE
/// coefficients at random unit states and standard-normal momenta.
pub fn catalog_residual_report<R: Rng + ?Sized>(
    terms: &[VertexTerm],
    n_samples: usize,
    params: &SimParams,
    rng: &mut R,
) -> CatalogResidualReport {
    let (mut max_abs, mut sum_sq, mut pmax, mut psum, mut zero, mut scal) = (0f64, 0.0, 0f64, 0.0, 0f64, 0f64);
    let quad_terms: Vec<VertexTerm> = terms.iter().filter(|t| t.momentum_degree() == 2).cloned().collect();
    for _ in 0..n_samples {
        let q = sample_ergodic(rng);
        let p: Vec4 = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
        let cat = interaction_integrand(terms, &q, &p, params);
        let derived = reference_integrand(&drift(&q, params), &diffusion(&q, params), &q, &p, params);
        let pr = printed_sde(&q, params);
        let printed = reference_integrand(&pr.drift, &pr.diffusion, &q, &p, params);
        let r = cat - derived;
        max_abs = max_abs.max(r.abs());
        sum_sq += r * r;
        let rp = cat - printed;
        pmax = pmax.max(rp.abs());
        psum += rp * rp;
        zero = zero.max(interaction_integrand(terms, &q, &[0.0; 4], params).abs());
        let p2 = p.map(|v| 2.0 * v);
        let s1 = interaction_integrand(&quad_terms, &q, &p, params);
        let s2 = interaction_integrand(&quad_terms, &q, &p2, params);
        scal = scal.max((s2 - 4.0 * s1).abs());
    }
    let n = n_samples.max(1) as f64;
    CatalogResidualReport {
        n_samples,
        n_terms: terms.len(),
        max_abs,
        rms: (sum_sq / n).sqrt(),
        printed_max_abs: pmax,
        printed_rms: (psum / n).sqrt(),
        p_zero_max: zero,
        quadratic_scaling_max: scal,
    }
}
