//! The computational subcommands.

use serde::Serialize;
use twoqubit_core::diagram::{closed_form_c2, linear_c2};
use twoqubit_core::ensemble::{
    compare_to_closed_form_with, run_ensemble, simulate_member, sweep_gamma, SteadyStateOptions,
};
use twoqubit_core::extremal::{
    classify_extremum, classify_global, detect_global_transition, global_optimum_flow_with, mean_readouts,
    shoot_with, BoundaryTarget, GlobalOptions, PerturbationOptions, ShootingOptions,
};
use twoqubit_core::rng::derive_seed;
use twoqubit_core::{Error, PureStateReal4, SimParams};

use crate::config::{default_dt, state, RunConfig};
use crate::error::CliResult;
use crate::output::{label, num, OutputDir};

#[derive(Debug, Serialize)]
struct CurveSummary {
    file: String,
    tau: f64,
    gamma: f64,
    dt: f64,
    n_traj: usize,
    n_aborted: usize,
    aborted: Vec<usize>,
}

pub fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let c = &cfg.simulate;
    let q0 = state(c.initial_state, "simulate.initial_state")?;
    let dt = c.dt.unwrap_or(default_dt(cfg.backend));
    let mut summary = Vec::new();
    for &gamma in &c.gammas {
        let params = SimParams {
            tau: c.tau,
            gamma,
            dt,
            t_final: c.t_final,
            n_traj: c.n_traj,
            seed: cfg.seed,
        };
        let ens = run_ensemble(q0, &params, cfg.backend)?;
        let tag = format!("tau{}_gamma{}", label(c.tau), label(gamma));
        let file = format!("simulate_{tag}.csv");
        let rows = (0..ens.times.len()).map(|i| {
            vec![
                num(ens.times[i]),
                num(ens.mean_c2[i]),
                ens.stderr.as_ref().map_or_else(|| "NA".to_string(), |s| num(s[i])),
            ]
        });
        out.csv(&file, &["t", "mean_c2", "stderr"], rows)?;
        if c.dump_trajectories {
            dump_trajectories(cfg, &params, q0, &ens.aborted, &format!("trajectories_{tag}.csv"), out)?;
        }
        summary.push(CurveSummary {
            file,
            tau: c.tau,
            gamma,
            dt,
            n_traj: ens.n_traj,
            n_aborted: ens.n_aborted,
            aborted: ens.aborted,
        });
    }
    out.json("simulate_summary.json", &summary)
}

fn dump_trajectories(
    cfg: &RunConfig,
    params: &SimParams,
    q0: PureStateReal4,
    aborted: &[usize],
    file: &str,
    out: &mut OutputDir,
) -> CliResult<()> {
    let mut rows = Vec::new();
    for i in (0..params.n_traj).filter(|i| !aborted.contains(i)) {
        let rec = simulate_member(q0, params, cfg.backend, i as u64)?;
        for k in 0..rec.len() {
            let q = rec.states[k];
            let (ro, nz) = (rec.readouts[k], rec.noises[k]);
            rows.push(vec![
                i.to_string(),
                num(rec.times[k]),
                num(q.a),
                num(q.c),
                num(q.alpha),
                num(q.gamma),
                num(rec.concurrence_sq[k]),
                num(ro.r),
                num(ro.w),
                num(nz.epsilon),
                num(nz.lambda),
            ]);
        }
    }
    out.csv(
        file,
        &["traj", "t", "a", "c", "alpha", "gamma", "c2", "r", "w", "epsilon", "lambda"],
        rows,
    )
}

pub fn optimal(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let c = &cfg.optimal;
    let q0 = state(c.initial_state, "optimal.initial_state")?;
    let target = match c.target_state {
        Some(s) => BoundaryTarget::State(state(s, "optimal.target_state")?),
        None => BoundaryTarget::Concurrence(c.target_concurrence),
    };
    let params = SimParams::new(c.tau, c.gamma, c.dt_out, c.t_final).with_seed(cfg.seed);
    let opts = ShootingOptions {
        n_starts: c.n_starts,
        seed: cfg.seed,
        dt_out: c.dt_out,
        ..Default::default()
    };
    let sol = shoot_with(q0, target, &params, c.t_final, &opts)?;
    let traj = &sol.trajectory;
    let report = classify_extremum(
        traj,
        &params,
        &PerturbationOptions {
            n_perturbations: c.n_perturbations,
            amplitude: c.perturbation_amplitude,
            seed: cfg.seed,
        },
    );
    let rows = (0..traj.times.len()).map(|i| {
        let x = &traj.phase_points[i];
        let s = &traj.controls[i];
        let mut row = vec![num(traj.times[i])];
        row.extend(x.q.to_array().map(num));
        row.extend(x.p.map(num));
        row.push(num(x.q.concurrence().squared()));
        row.extend([s.r, s.w, s.epsilon, s.lambda, traj.integrand[i]].map(num));
        row
    });
    out.csv(
        "optimal.csv",
        &[
            "t", "a", "c", "alpha", "gamma", "p_a", "p_c", "p_alpha", "p_gamma", "c2", "r", "w", "epsilon", "lambda",
            "cost",
        ],
        rows,
    )?;
    #[derive(Serialize)]
    struct Summary<'a> {
        target: BoundaryTarget,
        tau: f64,
        gamma: f64,
        t_final: f64,
        action: f64,
        classification: &'a twoqubit_core::extremal::ClassificationReport,
        p0: [f64; 4],
        residual: f64,
        n_converged: usize,
        n_starts: usize,
    }
    out.json(
        "optimal_summary.json",
        &Summary {
            target,
            tau: c.tau,
            gamma: c.gamma,
            t_final: c.t_final,
            action: traj.action,
            classification: &report,
            p0: sol.p0,
            residual: sol.residual,
            n_converged: sol.n_converged,
            n_starts: sol.n_starts,
        },
    )
}

pub fn global_opt(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let c = &cfg.global_opt;
    let q0 = state(c.initial_state, "global_opt.initial_state")?;
    let opts = GlobalOptions {
        dt_out: c.dt_out,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for &tau in &c.taus {
        // The global optimum does not depend on Γ.
        let params = SimParams::new(tau, 0.0, c.dt_out, c.t_final);
        let path = global_optimum_flow_with(q0, &params, c.t_final, &opts)?;
        out.csv(
            &format!("global_opt_tau{}.csv", label(tau)),
            &["t", "c2", "r", "w"],
            path.times.iter().zip(&path.states).zip(&path.concurrence_sq).map(|((t, q), c2)| {
                let (r, w) = mean_readouts(q);
                vec![num(*t), num(*c2), num(r), num(w)]
            }),
        )?;
        let cl = classify_global(tau, &opts)?;
        rows.push(vec![
            num(tau),
            cl.class.to_string(),
            num(cl.late_mean),
            num(cl.late_range),
        ]);
    }
    out.csv("global_opt_summary.csv", &["tau", "class", "late_mean_c2", "late_range_c2"], rows)?;
    let grid = c.transition_grid.clone().unwrap_or_else(|| c.taus.clone());
    #[derive(Serialize)]
    struct Transition {
        tau_critical: Option<f64>,
        bracket: Option<(f64, f64)>,
        note: Option<String>,
    }
    let t = match detect_global_transition(&grid, &opts) {
        Ok(est) => Transition {
            tau_critical: Some(est.tau_critical),
            bracket: Some(est.bracket),
            note: None,
        },
        Err(e @ Error::AmbiguousTransition) => {
            eprintln!("warning: {e}");
            Transition {
                tau_critical: None,
                bracket: None,
                note: Some(e.to_string()),
            }
        }
        Err(e) => return Err(e.into()),
    };
    out.json("transition.json", &t)
}

pub fn diagram(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let c = &cfg.diagram;
    let params = SimParams {
        tau: c.tau,
        gamma: c.gamma,
        dt: c.dt,
        t_final: c.t_final,
        n_traj: c.n_traj,
        seed: cfg.seed,
    };
    let n = params.n_steps();
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * c.dt).collect();
    out.csv(
        "diagram.csv",
        &["t", "linear_c2", "closed_form_c2"],
        times
            .iter()
            .map(|&t| vec![num(t), num(linear_c2(t, &params)), num(closed_form_c2(t, &params))]),
    )?;
    if !c.pair_with_simulation {
        return Ok(());
    }
    let ens = run_ensemble(PureStateReal4::uniform(), &params, cfg.backend)?;
    let rep = compare_to_closed_form_with(&ens, &params, c.deviation_band);
    let se = |i: usize| ens.stderr.as_ref().map_or_else(|| "NA".to_string(), |s| num(s[i]));
    out.csv(
        "deviation.csv",
        &["t", "mean_c2", "stderr", "closed_form_c2", "linear_c2", "deviation", "z", "linear_deviation"],
        (0..rep.times.len()).map(|i| {
            vec![
                num(rep.times[i]),
                num(ens.mean_c2[i]),
                se(i),
                num(rep.closed_form[i]),
                num(rep.linear[i]),
                num(rep.deviation[i]),
                num(rep.z[i]),
                num(rep.linear_deviation[i]),
            ]
        }),
    )?;
    #[derive(Serialize)]
    struct Summary {
        backend: twoqubit_core::ensemble::Backend,
        n_traj: usize,
        n_aborted: usize,
        band: f64,
        max_deviation: f64,
        max_z: f64,
        max_linear_deviation: f64,
        within_band: bool,
        closed_form_beats_linear: bool,
    }
    out.json(
        "deviation.json",
        &Summary {
            backend: cfg.backend,
            n_traj: ens.n_traj,
            n_aborted: ens.n_aborted,
            band: rep.band,
            max_deviation: rep.max_deviation,
            max_z: rep.max_z,
            max_linear_deviation: rep.max_linear_deviation,
            within_band: rep.within_band,
            closed_form_beats_linear: rep.max_linear_deviation > rep.max_deviation,
        },
    )
}

pub fn sweep(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let c = &cfg.sweep;
    let q0 = state(c.initial_state, "sweep.initial_state")?;
    let gammas = cfg.sweep_gammas();
    let opts = SteadyStateOptions {
        burn_in: c.burn_in,
        window: c.window,
        ..Default::default()
    };
    let mut results = Vec::new();
    for (i, &tau) in c.taus.iter().enumerate() {
        let params = SimParams {
            tau,
            gamma: 0.0,
            dt: c.dt.unwrap_or(default_dt(cfg.backend)),
            t_final: c.burn_in + c.window,
            n_traj: c.n_traj,
            seed: derive_seed(cfg.seed, i as u64),
        };
        let res = sweep_gamma(q0, tau, &gammas, &params, cfg.backend, &opts)?;
        out.csv(
            &format!("sweep_tau{}.csv", label(tau)),
            &["gamma", "mean_C", "err_C", "mean_C2", "err_C2", "nonstationary"],
            res.points.iter().map(|p| {
                let e = &p.estimate;
                vec![
                    num(p.gamma),
                    num(e.mean_c),
                    num(e.mean_c_err),
                    num(e.mean_c2),
                    num(e.mean_c2_err),
                    e.nonstationary.to_string(),
                ]
            }),
        )?;
        results.push(res);
    }
    out.json("sweep_summary.json", &results)
}
