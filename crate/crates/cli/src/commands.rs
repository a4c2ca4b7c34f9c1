use std::fs;
use std::path::{Path, PathBuf};

use mewls::continuation::SampleGrid;
use mewls::datagen::{
    example1, example2, fmt17, parse_csv, parse_trajectory_csv, save_dataset_csv,
    save_trajectory_csv, DatasetConfig, Example2Variant, LoadedProblem,
};
use mewls::diagnostics::{
    b_positivity_ratio, b_restricted_ratio, ORACLE_MAX_COLS, ORACLE_MAX_ROWS,
};
use mewls::{
    brute_force_oracle, core_set, envelope_check, limit_interpolant, ols_initial, rate_report,
    resample, sample_at, trace_branch, value_curve, ContinuationConfig, Problem, TerminationReason,
    Trajectory,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, EXIT_METHOD};
use crate::manifest::{
    now_utc, prepare_run_dir, write_json, Followup, InputRecord, OracleParams, RunManifest,
    MANIFEST_FILE,
};
use crate::{DiagnoseArgs, GenArgs, OracleArgs, TraceArgs};

pub const DATASET_FILE: &str = "dataset.csv";
pub const DATA_FILE: &str = "data.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TERMINATION_FILE: &str = "termination.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const ORACLE_FILE: &str = "oracle.json";

/// Relative step of the central difference in the envelope check.
const ENVELOPE_DELTA: f64 = 1e-4;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_problem(path: &Path) -> Result<(String, LoadedProblem), CliError> {
    let text = read_text(path)?;
    let loaded = parse_csv(&text).map_err(|e| CliError::in_file(path, e))?;
    Ok((text, loaded))
}

fn input_record(source: &Path, copy: Option<&str>, p: &Problem) -> InputRecord {
    InputRecord {
        source: source.display().to_string(),
        copy: copy.map(str::to_string),
        fingerprint: p.fingerprint(),
        m: p.m(),
        n: p.n(),
    }
}

fn or_error<T: Serialize>(r: mewls::Result<T>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(fmt17).collect::<Vec<_>>().join(", ")
}

pub fn gen(a: GenArgs) -> Result<u8, CliError> {
    let mut man = RunManifest::new("gen", now_utc());
    let (dataset, problem) = if a.example == 1 {
        if a.variant.is_some() {
            return Err(CliError::flag(
                "gen",
                "--variant applies only to --example 2",
            ));
        }
        let mut cfg = match &a.dataset_config {
            Some(path) => read_json::<DatasetConfig>(path)?,
            None => DatasetConfig::default(),
        };
        if let Some(seed) = a.seed {
            cfg.seed = seed;
        }
        if let Some(v) = a.noise_sigma2 {
            cfg.noise_sigma2 = v;
        }
        let out = example1(&cfg)?;
        man.dataset_config = Some(cfg);
        out
    } else {
        if a.seed.is_some() || a.noise_sigma2.is_some() || a.dataset_config.is_some() {
            return Err(CliError::flag(
                "gen",
                "--seed, --noise-sigma2 and --dataset-config apply only to --example 1",
            ));
        }
        let variant = a.variant.map_or(Example2Variant::Eight, Into::into);
        man.example2_variant = Some(variant);
        example2(variant)
    };

    prepare_run_dir(&a.out, a.force)?;
    let path = a.out.join(DATASET_FILE);
    save_dataset_csv(&dataset, &path).map_err(|e| CliError::in_file(&path, e))?;
    man.input = Some(input_record(&path, None, &problem));
    man.outputs = vec![DATASET_FILE.to_string()];
    man.finished_utc = now_utc();
    man.save(&a.out)?;
    println!(
        "wrote {} ({} rows), fingerprint {}",
        path.display(),
        problem.m(),
        problem.fingerprint()
    );
    Ok(0)
}

pub fn trace(a: TraceArgs) -> Result<u8, CliError> {
    let mut man = RunManifest::new("trace", now_utc());
    let mut cfg = match &a.config {
        Some(path) => read_json::<ContinuationConfig>(path)?,
        None => ContinuationConfig::default(),
    };
    cfg.e_target = a.target_mse;
    if let Some(n) = a.grid {
        cfg.sample_grid = SampleGrid::Count(n);
    }

    let (text, loaded) = load_problem(&a.data)?;
    let p = loaded.problem;
    let (ols, _) = ols_initial(&p).map_err(|e| CliError::in_file(&a.data, e))?;
    if !(a.target_mse > 0.0 && a.target_mse < ols.e_uw) {
        return Err(CliError::usage(format!(
            "--target-mse {} is outside the admissible range (0, E_uw) = (0, {})",
            fmt17(a.target_mse),
            fmt17(ols.e_uw)
        )));
    }
    cfg.validate()?;

    prepare_run_dir(&a.out, a.force)?;
    let data_copy = a.out.join(DATA_FILE);
    fs::write(&data_copy, &text).map_err(|e| CliError::io(&data_copy, e))?;
    let mut outputs = vec![DATA_FILE.to_string()];

    let outcome = trace_branch(&p, &cfg)?;
    let report = outcome.report;
    write_json(&a.out.join(TERMINATION_FILE), &report)?;
    outputs.push(TERMINATION_FILE.to_string());

    let mut final_weights = None;
    if let Some(traj) = &outcome.trajectory {
        let dense = resample(&p, traj, &cfg)
            .map_err(|e| CliError::method(format!("dense output on the sample grid failed: {e}")));
        let dense = match dense {
            Ok(t) => t,
            Err(e) => {
                write_trace_manifest(&mut man, &a, &cfg, &p, &report, &outputs)?;
                return Err(e);
            }
        };
        let path = a.out.join(TRAJECTORY_FILE);
        save_trajectory_csv(&dense, &path).map_err(|e| CliError::in_file(&path, e))?;
        outputs.push(TRAJECTORY_FILE.to_string());
        final_weights = Some(dense.last().state.w.clone());
    }
    write_trace_manifest(&mut man, &a, &cfg, &p, &report, &outputs)?;

    println!("termination: {:?}", report.reason);
    println!("E_uw:        {}", fmt17(ols.e_uw));
    println!("E_final:     {}", fmt17(report.e_final));
    println!("steps:       {}", report.evidence.accepted_steps);
    if let Some(w) = final_weights {
        println!("w_final:     [{}]", fmt_vec(w.iter().copied()));
    }
    if report.reason == TerminationReason::ReachedTarget {
        Ok(0)
    } else {
        let ev = &report.evidence;
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), fmt17);
        println!("eig_min:     {}", opt(ev.eig_min));
        println!("min_weight:  {}", opt(ev.min_weight));
        println!("y_norm:      {}", opt(ev.y_norm));
        println!("step_size:   {}", opt(ev.step_size));
        if let Some((lo, hi)) = ev.bracket {
            println!("bracket:     [{}, {}]", fmt17(lo), fmt17(hi));
        }
        if !ev.note.is_empty() {
            println!("note:        {}", ev.note);
        }
        Ok(EXIT_METHOD)
    }
}

fn write_trace_manifest(
    man: &mut RunManifest,
    a: &TraceArgs,
    cfg: &ContinuationConfig,
    p: &Problem,
    report: &mewls::TerminationReport,
    outputs: &[String],
) -> Result<(), CliError> {
    man.continuation_config = Some(cfg.clone());
    man.input = Some(input_record(&a.data, Some(DATA_FILE), p));
    man.termination = Some(report.clone());
    man.outputs = outputs.to_vec();
    man.finished_utc = now_utc();
    man.save(&a.out)
}

/// The problem, trajectory and configuration of a completed trace directory.
struct RunDir {
    manifest: RunManifest,
    cfg: ContinuationConfig,
    problem: Problem,
    trajectory: Trajectory,
}

fn open_run(dir: &Path) -> Result<RunDir, CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let manifest = RunManifest::load(dir)?;
    let cfg = manifest.continuation_config.clone().ok_or_else(|| {
        CliError::usage(format!(
            "{} was not written by trace (no continuation config)",
            RunManifest::path(dir).display()
        ))
    })?;
    let data = dir.join(DATA_FILE);
    let (_, loaded) = load_problem(&data)?;
    let problem = loaded.problem;
    if let Some(input) = &manifest.input {
        if input.fingerprint != problem.fingerprint() {
            return Err(CliError::usage(format!(
                "{} does not match the fingerprint recorded in {MANIFEST_FILE}",
                data.display()
            )));
        }
    }
    let traj_path = dir.join(TRAJECTORY_FILE);
    let text = read_text(&traj_path)?;
    let trajectory =
        parse_trajectory_csv(&text, &problem).map_err(|e| CliError::in_file(&traj_path, e))?;
    Ok(RunDir {
        manifest,
        cfg,
        problem,
        trajectory,
    })
}

pub fn diagnose(a: DiagnoseArgs) -> Result<u8, CliError> {
    let started = now_utc();
    if let Some(t) = a.core_threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::flag(
                "diagnose",
                "--core-threshold must lie in (0, 1)",
            ));
        }
    }
    if let (Some(lo), Some(hi)) = (a.fit_lo, a.fit_hi) {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(CliError::flag("diagnose", "need 0 < --fit-lo < --fit-hi"));
        }
    }
    let RunDir {
        mut manifest,
        cfg,
        problem: p,
        trajectory: traj,
    } = open_run(&a.run)?;

    let curve = value_curve(&traj);
    let monotone = curve.is_monotone(1e-12);
    let envelope = envelope_check(&p, &traj, ENVELOPE_DELTA, &cfg);
    let core = core_set(&p, &traj, a.core_threshold);
    let fit_range = match (a.fit_lo, a.fit_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            let (lo, hi) = (traj.last().e(), traj.first().e());
            (lo, if 0.1 * hi > lo { 0.1 * hi } else { hi })
        }
    };
    let (interpolant, rates, b_ratios) = match &core {
        Ok(c) => {
            let ratios: Vec<Value> = traj
                .samples
                .iter()
                .map(|s| {
                    json!({
                        "e": s.e(),
                        "restricted": b_restricted_ratio(&p, &s.state),
                        "bound": b_positivity_ratio(&p, &s.state, c.s0),
                    })
                })
                .collect();
            (
                or_error(limit_interpolant(&p, &c.indices)),
                or_error(rate_report(&p, &traj, &c.indices, fit_range)),
                Value::Array(ratios),
            )
        }
        Err(e) => {
            let err = json!({ "error": e.to_string() });
            (err.clone(), err.clone(), err)
        }
    };

    let summary_core = core.as_ref().ok().map(|c| c.indices.clone());
    let summary_env = envelope.as_ref().ok().map(|r| r.max_error);
    let summary_x = interpolant.get("x").cloned();
    let doc = json!({
        "problem_fingerprint": traj.problem_fingerprint,
        "e_uw": traj.ols.e_uw,
        "e_final": traj.last().e(),
        "value_curve": curve,
        "value_curve_monotone": monotone,
        "envelope": or_error(envelope),
        "envelope_delta_rel": ENVELOPE_DELTA,
        "core_set": or_error(core),
        "limit_interpolant": interpolant,
        "rates": rates,
        "b_positivity": b_ratios,
    });
    write_json(&a.run.join(DIAGNOSTICS_FILE), &doc)?;

    manifest.followups.push(Followup {
        command: "diagnose".to_string(),
        command_line: std::env::args().collect(),
        started_utc: started,
        finished_utc: now_utc(),
        params: json!({
            "core_threshold": a.core_threshold,
            "fit_lo": a.fit_lo,
            "fit_hi": a.fit_hi,
        }),
        outputs: vec![DIAGNOSTICS_FILE.to_string()],
    });
    manifest.save(&a.run)?;

    println!("wrote {}", a.run.join(DIAGNOSTICS_FILE).display());
    println!("mu monotone:        {monotone}");
    match summary_env {
        Some(v) => println!("envelope max error: {}", fmt17(v)),
        None => println!("envelope max error: unavailable"),
    }
    match summary_core {
        Some(ix) => println!("core set:           {ix:?}"),
        None => println!("core set:           unavailable"),
    }
    if let Some(Value::Array(x)) = summary_x {
        let x: Vec<f64> = x.iter().filter_map(Value::as_f64).collect();
        println!("limit interpolant:  [{}]", fmt_vec(x));
    }
    Ok(0)
}

/// Number of points on the simplex grid with `m` parts at `resolution`.
fn grid_size(m: usize, resolution: usize) -> f64 {
    (1..m).fold(1.0, |acc, k| acc * (resolution + k) as f64 / k as f64)
}

pub fn oracle(a: OracleArgs) -> Result<u8, CliError> {
    let started = now_utc();
    let (_, loaded) = load_problem(&a.data)?;
    let p = loaded.problem;
    if p.m() > ORACLE_MAX_ROWS || p.n() > ORACLE_MAX_COLS {
        return Err(CliError::usage(format!(
            "refusing to enumerate: the weight simplex for m = {} rows at resolution {} has \
             {:.3e} grid points and the search is limited to m <= {ORACLE_MAX_ROWS}, n <= {ORACLE_MAX_COLS} \
             (got n = {})",
            p.m(),
            a.resolution,
            grid_size(p.m(), a.resolution),
            p.n()
        )));
    }
    if a.resolution == 0 {
        return Err(CliError::flag("oracle", "--resolution must be positive"));
    }
    let out = a.out.clone().unwrap_or_else(|| match a.data.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    });
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let existing = if RunManifest::path(&out).exists() {
        Some(RunManifest::load(&out)?)
    } else {
        None
    };

    let result = brute_force_oracle(&p, a.mse, a.resolution)?;
    let comparison = existing
        .as_ref()
        .filter(|m| {
            m.input
                .as_ref()
                .is_some_and(|i| i.fingerprint == p.fingerprint())
                && m.continuation_config.is_some()
                && out.join(TRAJECTORY_FILE).is_file()
        })
        .map(|_| compare_with_trace(&out, &p, &result));

    let mut doc = json!({
        "problem_fingerprint": p.fingerprint(),
        "mse_target": a.mse,
        "resolution": a.resolution,
        "w": result.w.as_slice(),
        "x": result.x.as_slice(),
        "entropy": result.entropy,
        "mse": result.mse,
        "cell": result.cell,
        "candidates_in_band": result.candidates_in_band,
    });
    if let Some(c) = &comparison {
        doc["comparison"] = c.clone();
    }
    write_json(&out.join(ORACLE_FILE), &doc)?;

    let params = OracleParams {
        mse: a.mse,
        resolution: a.resolution,
    };
    match existing {
        Some(mut man) => {
            man.followups.push(Followup {
                command: "oracle".to_string(),
                command_line: std::env::args().collect(),
                started_utc: started,
                finished_utc: now_utc(),
                params: serde_json::to_value(&params).unwrap_or(Value::Null),
                outputs: vec![ORACLE_FILE.to_string()],
            });
            man.save(&out)?;
        }
        None => {
            let mut man = RunManifest::new("oracle", started);
            man.oracle = Some(params);
            man.input = Some(input_record(&a.data, None, &p));
            man.outputs = vec![ORACLE_FILE.to_string()];
            man.finished_utc = now_utc();
            man.save(&out)?;
        }
    }

    println!("wrote {}", out.join(ORACLE_FILE).display());
    println!("H:   {}", fmt17(result.entropy));
    println!("MSE: {}", fmt17(result.mse));
    println!("w:   [{}]", fmt_vec(result.w.iter().copied()));
    println!("x:   [{}]", fmt_vec(result.x.iter().copied()));
    if let Some(d) = comparison.as_ref().and_then(|c| c.get("max_abs_delta")) {
        println!(
            "max |w_oracle - w_branch|: {}",
            fmt17(d.as_f64().unwrap_or(f64::NAN))
        );
    }
    Ok(0)
}

fn compare_with_trace(dir: &Path, p: &Problem, o: &mewls::OracleResult) -> Value {
    let run = match open_run(dir) {
        Ok(r) => r,
        Err(e) => return json!({ "error": e.message }),
    };
    match sample_at(p, &run.trajectory, o.mse, &run.cfg) {
        Ok(c) => {
            let w = c.state.w;
            let delta: Vec<f64> = o.w.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
            let max_abs = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let h = mewls::model::entropy(&w);
            json!({
                "e": o.mse,
                "branch_w": w.as_slice(),
                "branch_x": c.state.x.as_slice(),
                "branch_entropy": h,
                "delta_w": delta,
                "max_abs_delta": max_abs,
                "delta_entropy": o.entropy - h,
            })
        }
        Err(e) => json!({ "error": e.to_string() }),
    }
}
