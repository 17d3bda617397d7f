//! Monte Carlo ensembles over independent trajectories.
//!
//! Trajectory `i` always draws from `stream(seed, i)`. Trajectories are run in
//! parallel in fixed-size chunks and reduced in index order, so every average
//! is bit-identical for any thread count.

mod stats;
mod steady;

pub use stats::*;
pub use steady::*;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kraus::{simulate_trajectory, SimParams, TrajectoryRecord};
use crate::rng::stream;
use crate::sde::simulate_trajectory_sde;
use crate::state::PureStateReal4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Kraus,
    Sde,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Kraus => "kraus",
            Self::Sde => "sde",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kraus" => Ok(Self::Kraus),
            "sde" => Ok(Self::Sde),
            _ => Err(Error::InvalidParameter(format!("unknown backend `{s}`"))),
        }
    }
}

/// Largest tolerated fraction of aborted trajectories.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

const CHUNK: usize = 256;

/// Trajectory `index` of the ensemble described by `params`.
pub fn simulate_member(q0: PureStateReal4, params: &SimParams, backend: Backend, index: u64) -> Result<TrajectoryRecord> {
    let mut rng = stream(params.seed, index);
    match backend {
        Backend::Kraus => simulate_trajectory(q0, params, &mut rng),
        Backend::Sde => simulate_trajectory_sde(q0, params, &mut rng),
    }
}

/// Runs all `params.n_traj` members, maps each record through `map` and feeds
/// the results to `sink` in index order. Returns the aborted indices.
pub(crate) fn for_each_member<T, F, S>(
    q0: PureStateReal4,
    params: &SimParams,
    backend: Backend,
    map: F,
    mut sink: S,
) -> Result<Vec<usize>>
where
    T: Send,
    F: Fn(TrajectoryRecord) -> T + Sync,
    S: FnMut(T),
{
    params.validate()?;
    let n = params.n_traj;
    let mut aborted = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<Result<T>> = (start..end)
            .into_par_iter()
            .map(|i| simulate_member(q0, params, backend, i as u64).map(&map))
            .collect();
        for (i, r) in (start..end).zip(chunk) {
            match r {
                Ok(v) => sink(v),
                Err(Error::TrajectoryAborted { .. }) => aborted.push(i),
                Err(e) => return Err(e),
            }
        }
    }
    if aborted.len() as f64 > MAX_ABORT_FRACTION * n as f64 {
        return Err(Error::TooManyAborts {
            aborted: aborted.len(),
            total: n,
        });
    }
    Ok(aborted)
}

/// Per-time running mean and sum of squared deviations.
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    pub n: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Welford {
    pub fn new(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, xs: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    /// Standard error of the mean; `None` below two samples.
    pub fn stderr(&self) -> Option<Vec<f64>> {
        (self.n >= 2).then(|| {
            let n = self.n as f64;
            self.m2.iter().map(|s| (s / (n - 1.0) / n).sqrt()).collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_c2: Vec<f64>,
    /// Absent for ensembles of a single trajectory.
    pub stderr: Option<Vec<f64>>,
    /// Trajectories that entered the averages.
    pub n_traj: usize,
    pub n_aborted: usize,
    pub aborted: Vec<usize>,
    pub params: SimParams,
    pub backend: Backend,
    /// Final `C²` of every averaged trajectory, in index order.
    pub final_c2: Vec<f64>,
    /// Full `C²` series per averaged trajectory, when requested.
    pub series: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnsembleOptions {
    pub keep_series: bool,
}

pub fn run_ensemble(q0: PureStateReal4, params: &SimParams, backend: Backend) -> Result<EnsembleResult> {
    run_ensemble_with(q0, params, backend, &EnsembleOptions::default())
}

pub fn run_ensemble_with(
    q0: PureStateReal4,
    params: &SimParams,
    backend: Backend,
    opts: &EnsembleOptions,
) -> Result<EnsembleResult> {
    params.validate()?;
    let len = params.n_steps() + 1;
    let times: Vec<f64> = (0..len).map(|k| k as f64 * params.dt).collect();
    let mut acc = Welford::new(len);
    let mut final_c2 = Vec::with_capacity(params.n_traj);
    let mut series = opts.keep_series.then(Vec::new);
    let aborted = for_each_member(
        q0,
        params,
        backend,
        |rec| rec.concurrence_sq,
        |c2| {
            acc.push(&c2);
            final_c2.push(*c2.last().unwrap_or(&0.0));
            if let Some(s) = series.as_mut() {
                s.push(c2);
            }
        },
    )?;
    Ok(EnsembleResult {
        times,
        stderr: acc.stderr(),
        mean_c2: acc.mean,
        n_traj: acc.n,
        n_aborted: aborted.len(),
        aborted,
        params: *params,
        backend,
        final_c2,
        series,
    })
}

fn average_series<'a>(times: &[f64], members: impl Iterator<Item = &'a Vec<f64>>) -> Welford {
    let mut acc = Welford::new(times.len());
    for s in members {
        acc.push(s);
    }
    acc
}

/// Occupancy of the ten equal-width bins of final `C²` on `[0, 1]`.
pub fn final_c2_histogram(final_c2: &[f64]) -> Vec<usize> {
    let mut h = vec![0; 10];
    for &x in final_c2 {
        h[((x * 10.0) as usize).min(9)] += 1;
    }
    h
}

/// Conditional averages over the trajectories whose final `C²` satisfies `keep`.
///
/// Needs an ensemble run with `keep_series`.
pub fn post_select_by<F: Fn(f64) -> bool>(ens: &EnsembleResult, keep: F) -> Result<EnsembleResult> {
    let series = ens
        .series
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("post-selection needs the per-trajectory series".into()))?;
    let picked: Vec<usize> = (0..series.len()).filter(|&i| keep(ens.final_c2[i])).collect();
    if picked.is_empty() {
        return Err(Error::EmptyBin {
            occupancy: final_c2_histogram(&ens.final_c2),
        });
    }
    let acc = average_series(&ens.times, picked.iter().map(|&i| &series[i]));
    Ok(EnsembleResult {
        times: ens.times.clone(),
        stderr: acc.stderr(),
        mean_c2: acc.mean,
        n_traj: acc.n,
        n_aborted: ens.n_aborted,
        aborted: ens.aborted.clone(),
        params: ens.params,
        backend: ens.backend,
        final_c2: picked.iter().map(|&i| ens.final_c2[i]).collect(),
        series: Some(picked.iter().map(|&i| series[i].clone()).collect()),
    })
}

/// Post-selection on final `C² ∈ [lo, hi]`.
pub fn post_select(ens: &EnsembleResult, lo: f64, hi: f64) -> Result<EnsembleResult> {
    if !(lo <= hi) {
        return Err(Error::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
    }
    post_select_by(ens, |x| (lo..=hi).contains(&x))
}

/// Edges of the ten empirical deciles of final `C²`; `edges[0]` is the minimum
/// and `edges[10]` the maximum.
pub fn final_c2_deciles(ens: &EnsembleResult) -> Vec<f64> {
    let mut x = ens.final_c2.clone();
    x.sort_by(f64::total_cmp);
    if x.is_empty() {
        return Vec::new();
    }
    (0..=10)
        .map(|k| {
            let pos = k as f64 / 10.0 * (x.len() - 1) as f64;
            let (i, f) = (pos.floor() as usize, pos.fract());
            if i + 1 < x.len() {
                x[i] + f * (x[i + 1] - x[i])
            } else {
                x[i]
            }
        })
        .collect()
}

/// Post-selection on the `k`-th decile of final `C²` (0 = lowest).
pub fn post_select_decile(ens: &EnsembleResult, k: usize) -> Result<EnsembleResult> {
    if k >= 10 {
        return Err(Error::InvalidParameter(format!("decile {k} out of range")));
    }
    let e = final_c2_deciles(ens);
    if e.is_empty() {
        return Err(Error::EmptyBin { occupancy: vec![0; 10] });
    }
    let (lo, hi) = (e[k], e[k + 1]);
    if k == 9 {
        post_select_by(ens, |x| x >= lo && x <= hi)
    } else {
        post_select_by(ens, |x| x >= lo && x < hi)
    }
}

/// Interior sign changes of the discrete second derivative, ignoring
/// curvature below `tol`.
pub fn count_inflexions(y: &[f64], tol: f64) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for w in y.windows(3) {
        let d2 = w[2] - 2.0 * w[1] + w[0];
        if d2.abs() <= tol {
            continue;
        }
        if last != 0.0 && d2.signum() != last {
            count += 1;
        }
        last = d2.signum();
    }
    count
}
