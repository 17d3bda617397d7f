//! Run configuration: one TOML file with a table per command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twoqubit_core::ensemble::Backend;
use twoqubit_core::sde::DEFAULT_SDE_DT;
use twoqubit_core::PureStateReal4;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: Backend,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub simulate: SimulateConfig,
    pub optimal: OptimalConfig,
    pub global_opt: GlobalOptConfig,
    pub diagram: DiagramConfig,
    pub sweep: SweepConfig,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backend: Backend::Kraus,
            out: None,
            threads: None,
            simulate: SimulateConfig::default(),
            optimal: OptimalConfig::default(),
            global_opt: GlobalOptConfig::default(),
            diagram: DiagramConfig::default(),
            sweep: SweepConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub tau: f64,
    pub gammas: Vec<f64>,
    /// Defaults to 0.02 for Kraus and 0.005 for the SDE.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub n_traj: usize,
    pub initial_state: [f64; 4],
    pub dump_trajectories: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            gammas: vec![0.0, 1.0, 3.0, 10.0],
            dt: None,
            t_final: 10.0,
            n_traj: 400,
            initial_state: [0.5; 4],
            dump_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimalConfig {
    pub tau: f64,
    pub gamma: f64,
    pub t_final: f64,
    pub initial_state: [f64; 4],
    /// Final concurrence class; ignored when `target_state` is set.
    pub target_concurrence: f64,
    pub target_state: Option<[f64; 4]>,
    pub n_starts: usize,
    pub dt_out: f64,
    pub n_perturbations: usize,
    pub perturbation_amplitude: f64,
}

impl Default for OptimalConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            gamma: 0.01,
            t_final: 3.0,
            initial_state: [0.5; 4],
            target_concurrence: 1.0,
            target_state: None,
            n_starts: 64,
            dt_out: 0.005,
            n_perturbations: 200,
            perturbation_amplitude: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalOptConfig {
    pub taus: Vec<f64>,
    pub t_final: f64,
    pub dt_out: f64,
    pub initial_state: [f64; 4],
    /// Grid bracketing the transition; defaults to `taus`.
    pub transition_grid: Option<Vec<f64>>,
}

impl Default for GlobalOptConfig {
    fn default() -> Self {
        Self {
            taus: vec![0.3, 0.4, 0.6, 0.7],
            t_final: 20.0,
            dt_out: 0.01,
            initial_state: [0.5; 4],
            transition_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagramConfig {
    pub tau: f64,
    pub gamma: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Also run an ensemble on the same grid and report the deviation.
    pub pair_with_simulation: bool,
    pub n_traj: usize,
    pub deviation_band: f64,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            gamma: 0.05,
            t_final: 3.0,
            dt: 0.005,
            pair_with_simulation: false,
            n_traj: 10_000,
            deviation_band: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub taus: Vec<f64>,
    /// Explicit grid; when absent a log grid from `gamma_min` to `gamma_max`.
    pub gammas: Option<Vec<f64>>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub n_gamma: usize,
    pub dt: Option<f64>,
    pub n_traj: usize,
    pub burn_in: f64,
    pub window: f64,
    pub initial_state: [f64; 4],
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            taus: vec![0.2],
            gammas: None,
            gamma_min: 0.01,
            gamma_max: 10.0,
            n_gamma: 7,
            dt: None,
            n_traj: 2000,
            burn_in: 15.0,
            window: 15.0,
            initial_state: [0.5; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Include the SDE backend and the cross-backend checks.
    pub sde: bool,
    /// Vertex catalog to check instead of the bundled one.
    pub catalog: Option<PathBuf>,
    pub catalog_samples: usize,
    pub n_traj: usize,
    pub n_extremals: usize,
    pub n_phase_points: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            sde: true,
            catalog: None,
            catalog_samples: 1000,
            n_traj: 2000,
            n_extremals: 20,
            n_phase_points: 1000,
        }
    }
}

pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> CliResult<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn default_dt(backend: Backend) -> f64 {
    match backend {
        Backend::Kraus => 0.02,
        Backend::Sde => DEFAULT_SDE_DT,
    }
}

pub fn state(v: [f64; 4], what: &str) -> CliResult<PureStateReal4> {
    twoqubit_core::normalize(PureStateReal4::from_array(v)).map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(msg()))
    }
}

fn positive(x: f64, name: &str) -> CliResult<()> {
    check(x > 0.0, || format!("{name} must be positive, got {x}"))
}

fn nonneg_finite(x: f64, name: &str) -> CliResult<()> {
    check(x >= 0.0 && x.is_finite(), || format!("{name} must be finite and non-negative, got {x}"))
}

impl RunConfig {
    /// Schema checks beyond what deserialization enforces, for one command.
    pub fn validate_for(&self, command: &str) -> CliResult<()> {
        check(self.threads != Some(0), || "threads must be at least 1".into())?;
        match command {
            "simulate" => {
                let c = &self.simulate;
                positive(c.tau, "simulate.tau")?;
                check(!c.gammas.is_empty(), || "simulate.gammas is empty".into())?;
                for &g in &c.gammas {
                    nonneg_finite(g, "simulate.gammas")?;
                }
                if let Some(dt) = c.dt {
                    positive(dt, "simulate.dt")?;
                }
                nonneg_finite(c.t_final, "simulate.t_final")?;
                check(c.n_traj > 0, || "simulate.n_traj must be at least 1".into())?;
                state(c.initial_state, "simulate.initial_state").map(|_| ())
            }
            "optimal" => {
                let c = &self.optimal;
                positive(c.tau, "optimal.tau")?;
                nonneg_finite(c.gamma, "optimal.gamma")?;
                nonneg_finite(c.t_final, "optimal.t_final")?;
                check((0.0..=1.0).contains(&c.target_concurrence), || {
                    "optimal.target_concurrence must lie in [0, 1]".into()
                })?;
                check(c.n_starts > 0, || "optimal.n_starts must be at least 1".into())?;
                positive(c.dt_out, "optimal.dt_out")?;
                positive(c.perturbation_amplitude, "optimal.perturbation_amplitude")?;
                if let Some(s) = c.target_state {
                    state(s, "optimal.target_state")?;
                }
                state(c.initial_state, "optimal.initial_state").map(|_| ())
            }
            "global-opt" => {
                let c = &self.global_opt;
                check(!c.taus.is_empty(), || "global_opt.taus is empty".into())?;
                for &t in c.taus.iter().chain(c.transition_grid.iter().flatten()) {
                    positive(t, "global_opt tau")?;
                }
                nonneg_finite(c.t_final, "global_opt.t_final")?;
                positive(c.dt_out, "global_opt.dt_out")?;
                state(c.initial_state, "global_opt.initial_state").map(|_| ())
            }
            "diagram" => {
                let c = &self.diagram;
                positive(c.tau, "diagram.tau")?;
                nonneg_finite(c.gamma, "diagram.gamma")?;
                nonneg_finite(c.t_final, "diagram.t_final")?;
                positive(c.dt, "diagram.dt")?;
                check(c.n_traj > 0, || "diagram.n_traj must be at least 1".into())?;
                positive(c.deviation_band, "diagram.deviation_band")
            }
            "sweep" => {
                let c = &self.sweep;
                check(!c.taus.is_empty(), || "sweep.taus is empty".into())?;
                for &t in &c.taus {
                    positive(t, "sweep.taus")?;
                }
                match &c.gammas {
                    Some(g) => {
                        check(!g.is_empty(), || "sweep.gammas is empty".into())?;
                        for &x in g {
                            positive(x, "sweep.gammas")?;
                        }
                    }
                    None => {
                        positive(c.gamma_min, "sweep.gamma_min")?;
                        check(c.gamma_max >= c.gamma_min, || "sweep.gamma_max below gamma_min".into())?;
                        check(c.n_gamma > 0, || "sweep.n_gamma must be at least 1".into())?;
                    }
                }
                if let Some(dt) = c.dt {
                    positive(dt, "sweep.dt")?;
                }
                check(c.n_traj > 0, || "sweep.n_traj must be at least 1".into())?;
                nonneg_finite(c.burn_in, "sweep.burn_in")?;
                positive(c.window, "sweep.window")?;
                state(c.initial_state, "sweep.initial_state").map(|_| ())
            }
            "validate" => {
                let c = &self.validate;
                check(c.catalog_samples > 0 && c.n_traj > 1 && c.n_extremals > 0 && c.n_phase_points > 0, || {
                    "validate sample counts must be positive".into()
                })
            }
            other => Err(CliError::Validation(format!("unknown command `{other}`"))),
        }
    }

    pub fn sweep_gammas(&self) -> Vec<f64> {
        let c = &self.sweep;
        c.gammas
            .clone()
            .unwrap_or_else(|| twoqubit_core::ensemble::log_grid(c.gamma_min, c.gamma_max, c.n_gamma))
    }
}
