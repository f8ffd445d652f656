//! Subcommand implementations.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use mtms::dynamics::{
    detuned_state, effective_heating_factor, fidelity_detuning, fidelity_heating,
    leading_order_budget, trajectory, GateScenario, Trajectory,
};
use mtms::lindblad::{default_truncation, evolve, SimConfig, SpinBasis, SweepRow};
use mtms::tomography::{
    bell_fidelity_estimate, default_phases, mle_parity_fit, mle_populations,
    parity_scan_probabilities, synthesize_parity_dataset, CountsRecord, ParityDataset,
};
use mtms::tones::ToneSet;

use crate::config::{
    self, SimulateConfig, SweepConfig, TomoFitConfig, TomoGenerateConfig,
};
use crate::output::{emit_csv, emit_json};
use crate::preset;
use crate::{
    CliError, FidelityArgs, FigureArgs, FigureId, Preset, SimulateArgs, SweepArgs, TomoFitArgs,
    TomoGenerateArgs, TonesArgs, TrajectoryArgs,
};

fn resolve_delta(delta_hz: f64, p: Option<Preset>) -> f64 {
    match p {
        Some(Preset::Paper) => preset::paper().delta_rad_per_s,
        None => TAU * delta_hz,
    }
}

pub fn tones(args: &TonesArgs) -> Result<(), CliError> {
    let delta = resolve_delta(args.delta_hz, args.preset);
    let ts = ToneSet::optimized(args.n, delta)?;
    let (entangling, closure) = ts.constraint_residuals();
    let payload = json!({
        "n_tones": ts.n_tones(),
        "delta_rad_per_s": ts.delta(),
        "gate_time_s": ts.gate_time(),
        "coeffs": ts.coeffs(),
        "constraint_residuals": { "entangling": entangling, "closure": closure },
        "heating_objective": ts.heating_objective(),
        "effective_heating_factor": effective_heating_factor(&ts),
    });
    emit_json(&payload, args.out.as_deref())
}

const TRAJECTORY_HEADER: [&str; 4] = ["t_s", "re_f", "im_f", "g_rad"];

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    traj.samples
        .iter()
        .map(|s| {
            vec![
                s.t.to_string(),
                s.f.re.to_string(),
                s.f.im.to_string(),
                s.g.to_string(),
            ]
        })
        .collect()
}

pub fn trajectory_cmd(args: &TrajectoryArgs) -> Result<(), CliError> {
    let delta = resolve_delta(args.delta_hz, args.preset);
    let ts = ToneSet::optimized(args.n, delta)?;
    let sc = GateScenario::new(ts, args.detuning_frac * delta, 0.0, 0.0)?;
    let traj = trajectory(&sc, args.samples)?;
    emit_csv(&TRAJECTORY_HEADER, &trajectory_rows(&traj), args.out.as_deref())
}

pub fn fidelity(args: &FidelityArgs) -> Result<(), CliError> {
    let delta = resolve_delta(args.delta_hz, args.preset);
    let ts = ToneSet::optimized(args.n, delta)?;
    let sc = GateScenario::new(
        ts,
        args.detuning_frac * delta,
        args.heating_rate,
        args.nbar,
    )?;
    let budget = leading_order_budget(&sc);
    let payload = json!({
        "detuning_fidelity": fidelity_detuning(&sc)?,
        "heating_fidelity": fidelity_heating(sc.tones(), args.heating_rate)?,
        "effective_heating_factor": effective_heating_factor(sc.tones()),
        "leading_order": serde_json::to_value(&budget)
            .map_err(|e| CliError::runtime(e.to_string()))?,
    });
    emit_json(&payload, args.out.as_deref())
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg: SimulateConfig = config::load(&args.config, config::SIMULATE_SCHEMA)?;
    let sim = cfg.scenario.sim_config()?;
    let t0 = Instant::now();
    let (_, report) = evolve(&sim)?;
    let wall = t0.elapsed().as_secs_f64();
    let mut payload =
        serde_json::to_value(&report).map_err(|e| CliError::runtime(e.to_string()))?;
    payload["wall_time_s"] = json!(wall);
    payload["fock_truncation"] = json!(sim.fock_truncation());
    payload["step_tolerance"] = json!(sim.step_tolerance());
    emit_json(&payload, args.out.as_deref())
}

fn threads_or_default(requested: Option<usize>) -> Result<usize, CliError> {
    let t = requested.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    if t == 0 {
        return Err(CliError::config("--threads must be at least 1"));
    }
    Ok(t)
}

/// Runs a grid of solver configs, emitting progress on stderr. Single
/// threaded runs report per point; parallel runs report once per grid.
fn run_grid(grid: &[SimConfig], threads: usize, label: &str) -> Result<Vec<SweepRow>, CliError> {
    let t0 = Instant::now();
    if threads <= 1 {
        let mut rows = Vec::with_capacity(grid.len());
        for (i, cfg) in grid.iter().enumerate() {
            let mut chunk = mtms::lindblad::sweep(std::slice::from_ref(cfg))?;
            chunk[0].index = i;
            rows.append(&mut chunk);
            eprintln!(
                "{label}: {}/{} done ({:.1} s)",
                i + 1,
                grid.len(),
                t0.elapsed().as_secs_f64()
            );
        }
        Ok(rows)
    } else {
        eprintln!("{label}: running {} points on {threads} threads", grid.len());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::runtime(format!("cannot build thread pool: {e}")))?;
        let rows = pool.install(|| mtms::lindblad::sweep(grid))?;
        eprintln!(
            "{label}: {} points done ({:.1} s)",
            grid.len(),
            t0.elapsed().as_secs_f64()
        );
        Ok(rows)
    }
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg: SweepConfig = config::load(&args.config, config::SWEEP_SCHEMA)?;
    let grid = cfg.grid()?;
    let threads = threads_or_default(args.threads)?;
    let rows = run_grid(&grid, threads, "sweep")?;
    let header = [
        "index",
        "parameter",
        "value",
        "fidelity",
        "truncation_converged",
        "leaked_population",
        "max_trace_deviation",
        "steps",
        "error",
    ];
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut rec = vec![
                row.index.to_string(),
                cfg.parameter_name().to_string(),
                cfg.values[row.index].to_string(),
            ];
            match &row.outcome {
                Ok(rep) => rec.extend([
                    rep.fidelity.to_string(),
                    rep.truncation_converged.to_string(),
                    rep.leaked_population.to_string(),
                    rep.max_trace_deviation.to_string(),
                    rep.steps.to_string(),
                    String::new(),
                ]),
                Err(msg) => rec.extend([
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    msg.clone(),
                ]),
            }
            rec
        })
        .collect();
    emit_csv(&header, &records, args.out.as_deref())
}

fn figure_path(dir: &Path, stem: &str, n: usize) -> PathBuf {
    dir.join(format!("{stem}_n{n}.csv"))
}

pub fn figure(args: &FigureArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        CliError::runtime(format!("cannot create {}: {e}", args.out_dir.display()))
    })?;
    match args.id {
        FigureId::Fig1b => figure_trajectories(args, 0.0, "fig1b"),
        FigureId::Fig1c => figure_trajectories(args, 0.05, "fig1c"),
        FigureId::Fig2 => figure_heating(args),
        FigureId::Fig3 => figure_detuning(args),
        FigureId::Fig4Analytic => figure_parity(args),
    }
}

/// Phase-space loops for one, two, and three tones; `frac` opens them.
fn figure_trajectories(args: &FigureArgs, frac: f64, stem: &str) -> Result<(), CliError> {
    let delta = resolve_delta(1.0, args.preset);
    for n in 1..=3 {
        let ts = ToneSet::optimized(n, delta)?;
        let sc = GateScenario::new(ts, frac * delta, 0.0, 0.0)?;
        let traj = trajectory(&sc, 600)?;
        let path = figure_path(&args.out_dir, stem, n);
        emit_csv(&TRAJECTORY_HEADER, &trajectory_rows(&traj), Some(&path))?;
        let end = traj.samples.last().expect("trajectory is never empty");
        eprintln!(
            "figure: wrote {} (endpoint |F| = {:.3e})",
            path.display(),
            end.f.norm()
        );
    }
    Ok(())
}

/// Solver fidelity vs heating for the one- and two-tone gates, with the
/// closed form alongside for overlay.
fn figure_heating(args: &FigureArgs) -> Result<(), CliError> {
    let p = args.preset.map(|_| preset::paper());
    let delta = p.map_or(TAU, |p| p.delta_rad_per_s);
    let nbar = p.map_or(0.0, |p| p.nbar_cold);
    let threads = threads_or_default(args.threads)?;
    let quanta: Vec<f64> = (0..9).map(|i| 0.25 * i as f64).collect();
    for n in [1usize, 2] {
        let ts = ToneSet::optimized(n, delta)?;
        let tau = ts.gate_time();
        let grid: Vec<SimConfig> = quanta
            .iter()
            .map(|&q| {
                let sc = GateScenario::new(ts.clone(), 0.0, q / tau, nbar)?;
                // Headroom over the automatic size for the quanta gained
                // during the gate.
                let m = default_truncation(&sc) + (3.0 * q).ceil() as usize;
                Ok(SimConfig::new(sc, m, 1e-7, SpinBasis::SigmaXSum)?)
            })
            .collect::<Result<_, CliError>>()?;
        let rows = run_grid(&grid, threads, "figure")?;
        let records = rows
            .iter()
            .map(|row| {
                let q = quanta[row.index];
                let rep = row
                    .outcome
                    .as_ref()
                    .map_err(|e| CliError::runtime(format!("point {} failed: {e}", row.index)))?;
                let closed = fidelity_heating(&ts, q / tau)?;
                Ok(vec![
                    (q / tau).to_string(),
                    q.to_string(),
                    rep.fidelity.to_string(),
                    closed.to_string(),
                ])
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let path = figure_path(&args.out_dir, "fig2", n);
        emit_csv(
            &["ndot_quanta_per_s", "ndot_tau", "fidelity", "closed_form"],
            &records,
            Some(&path),
        )?;
        eprintln!("figure: wrote {}", path.display());
    }
    Ok(())
}

/// Solver fidelity vs fractional detuning error, with the closed form.
fn figure_detuning(args: &FigureArgs) -> Result<(), CliError> {
    let p = args.preset.map(|_| preset::paper());
    let delta = p.map_or(TAU, |p| p.delta_rad_per_s);
    let nbar = p.map_or(0.0, |p| p.nbar_cold);
    let threads = threads_or_default(args.threads)?;
    let fracs: Vec<f64> = (0..11).map(|i| 0.01 * i as f64).collect();
    for n in [1usize, 2] {
        let ts = ToneSet::optimized(n, delta)?;
        let grid: Vec<SimConfig> = fracs
            .iter()
            .map(|&r| {
                let sc = GateScenario::new(ts.clone(), r * delta, 0.0, nbar)?;
                let m = default_truncation(&sc);
                Ok(SimConfig::new(sc, m, 1e-7, SpinBasis::SigmaXSum)?)
            })
            .collect::<Result<_, CliError>>()?;
        let rows = run_grid(&grid, threads, "figure")?;
        let records = rows
            .iter()
            .map(|row| {
                let r = fracs[row.index];
                let rep = row
                    .outcome
                    .as_ref()
                    .map_err(|e| CliError::runtime(format!("point {} failed: {e}", row.index)))?;
                let sc = GateScenario::new(ts.clone(), r * delta, 0.0, nbar)?;
                Ok(vec![
                    r.to_string(),
                    rep.fidelity.to_string(),
                    fidelity_detuning(&sc)?.to_string(),
                ])
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let path = figure_path(&args.out_dir, "fig3", n);
        emit_csv(
            &["detuning_frac", "fidelity", "closed_form"],
            &records,
            Some(&path),
        )?;
        eprintln!("figure: wrote {}", path.display());
    }
    Ok(())
}

/// Closed-form parity scans of the hot-ion gate under a detuning error.
fn figure_parity(args: &FigureArgs) -> Result<(), CliError> {
    let p = args.preset.map(|_| preset::paper());
    let delta = p.map_or(TAU, |p| p.delta_rad_per_s);
    let nbar = p.map_or(53.0, |p| p.nbar_hot);
    for n in [1usize, 2] {
        let ts = ToneSet::optimized(n, delta)?;
        let sc = GateScenario::new(ts, args.detuning_frac * delta, 0.0, nbar)?;
        let rho = detuned_state(&sc)?;
        let records = (0..97)
            .map(|i| {
                let phi = PI * i as f64 / 96.0;
                let probs = parity_scan_probabilities(&rho, phi)?;
                let parity = probs[0] - probs[1] + probs[2];
                Ok(vec![phi.to_string(), parity.to_string()])
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let path = figure_path(&args.out_dir, "fig4-analytic", n);
        emit_csv(&["phi_rad", "parity"], &records, Some(&path))?;
        eprintln!("figure: wrote {}", path.display());
    }
    Ok(())
}

pub fn tomo_generate(args: &TomoGenerateArgs) -> Result<(), CliError> {
    let mut cfg: TomoGenerateConfig = config::load(&args.config, config::TOMO_GENERATE_SCHEMA)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let spam = cfg.spam.build()?;
    let rho = cfg.state.build()?;
    let phases = cfg.phases.clone().unwrap_or_else(default_phases);
    let ds = synthesize_parity_dataset(&rho, &spam, &phases, cfg.shots_per_point, cfg.seed)?;
    let records: Vec<Vec<String>> = ds
        .phases()
        .iter()
        .zip(ds.counts())
        .map(|(&phi, c)| {
            vec![
                phi.to_string(),
                c.x0().to_string(),
                c.x1().to_string(),
                c.x2().to_string(),
            ]
        })
        .collect();
    emit_csv(&["phi_rad", "x0", "x1", "x2"], &records, args.out.as_deref())
}

fn read_dataset_csv(path: &str) -> Result<Vec<(f64, CountsRecord)>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::config(format!("cannot read {path}: {e}")))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::config(format!("{path}: {e}")))?
        .clone();
    let expected = ["phi_rad", "x0", "x1", "x2"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::config(format!(
            "{path}: header must be phi_rad,x0,x1,x2 (got {})",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("{path}: {e}")))?;
        let field = |j: usize| -> Result<&str, CliError> {
            rec.get(j).ok_or_else(|| {
                CliError::config(format!("{path} row {}: missing column {j}", i + 2))
            })
        };
        let phi: f64 = field(0)?.parse().map_err(|_| {
            CliError::config(format!("{path} row {}: bad phi_rad value", i + 2))
        })?;
        let mut xs = [0u64; 3];
        for (k, x) in xs.iter_mut().enumerate() {
            *x = field(k + 1)?.parse().map_err(|_| {
                CliError::config(format!("{path} row {}: bad x{k} value", i + 2))
            })?;
        }
        points.push((phi, CountsRecord::new(xs[0], xs[1], xs[2])?));
    }
    Ok(points)
}

pub fn tomo_fit(args: &TomoFitArgs) -> Result<(), CliError> {
    let cfg: TomoFitConfig = config::load(&args.config, config::TOMO_FIT_SCHEMA)?;
    let spam = cfg.spam.build()?;
    let points = read_dataset_csv(&cfg.dataset_csv)?;
    let ds = ParityDataset::new(points, spam.clone())?;
    let fit = mle_parity_fit(&ds)?;
    let mut payload = json!({
        "amplitude": fit.amplitude,
        "phase_rad": fit.phase,
        "log_likelihood": fit.log_likelihood,
        "se_amplitude": fit.se_amplitude,
        "se_phase": fit.se_phase,
    });
    if let Some([x0, x1, x2]) = cfg.population_counts {
        let counts = CountsRecord::new(x0, x1, x2)?;
        let est = mle_populations(&counts, &spam)?;
        let expected = cfg.expected_phase_rad.unwrap_or(FRAC_PI_2);
        payload["populations"] = json!({
            "p1": est.p1,
            "p2": est.p2,
            "se_p1": est.se_p1,
            "se_p2": est.se_p2,
            "even_population": est.even_population(),
            "log_likelihood": est.log_likelihood,
        });
        payload["expected_phase_rad"] = json!(expected);
        payload["bell_fidelity"] = json!(bell_fidelity_estimate(
            est.even_population(),
            fit.amplitude,
            fit.phase - expected,
        )?);
    }
    emit_json(&payload, args.out.as_deref())
}
