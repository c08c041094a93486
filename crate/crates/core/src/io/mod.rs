//! Configuration, file formats and the command pipelines.
//!
//! A simulation directory holds `trajectory.csv` (one row per step),
//! `eta_history.bin` (all surface levels, row-major), `manifest.json` (config,
//! run status, file list) and optional `snapshots/`. `diagnose` replays the
//! history, checks it against the CSV and appends the derived columns.

pub mod config;
pub mod format;

pub use config::{load_config, parse_config, SimConfig};

use crate::diagnostics::analyzer::DERIVED_COLUMNS;
use crate::diagnostics::{decay_fit, remainder_scan, non_increasing_from, Analyzer, DecayFit, DiagnosticsRecord, ScanReport, CSV_COLUMNS};
use crate::dynamics::{project_zero_mean, run, Record, Reference, RunStatus, RunSummary, SimState};
use crate::elliptic::bench::{convergence_suite, wedge_angles, wedge_benchmark, ConvergenceRow, WedgeResult};
use crate::error::{MuskatError, Result};
use crate::stationary::{solve_stationary, StationarySummary};
use format::{fmt_f64, read_csv, read_f64s, write_csv, write_f64s, write_json, write_table, SnapshotHeader};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const HISTORY_FILE: &str = "eta_history.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "diagnostics.json";
pub const SNAPSHOT_FIELDS: [&str; 4] = ["x", "y", "phi", "detj"];

/// Writes `stationary.csv` (x, h_s, h_w) and `stationary.json` into `dir`.
pub fn run_stationary(cfg: &SimConfig, dir: &Path) -> Result<StationarySummary> {
    let state = solve_stationary(&cfg.params, &cfg.vessel()?, cfg.grid.nx)?;
    fs::create_dir_all(dir)?;
    let xs = state.h_s.xs();
    let rows: Vec<Vec<f64>> =
        (0..xs.len()).map(|i| vec![xs[i], state.h_s.values()[i], state.h_w.values()[i]]).collect();
    write_csv(&dir.join("stationary.csv"), &["x", "h_s", "h_w"], &rows)?;
    let summary = state.summary();
    write_json(&dir.join("stationary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: SimConfig,
    /// Terminal status of the run.
    pub run: RunSummary,
    /// Trapezoid mean removed from the initial surface.
    pub removed_mean: f64,
    pub nx: usize,
    pub records: usize,
    pub trajectory: String,
    pub eta_history: String,
    pub snapshots: Vec<String>,
}

fn snapshot(rec: &Record, reference: &Reference, dir: &Path) -> Result<String> {
    let m = &reference.mesh;
    let name = format!("snapshot_{:06}", rec.step);
    let mut data = Vec::with_capacity(4 * m.n_nodes());
    data.extend_from_slice(&m.px);
    data.extend_from_slice(&m.py);
    data.extend_from_slice(&rec.eval.phi);
    data.extend_from_slice(&rec.eval.coeffs.detj_n);
    write_f64s(&dir.join(format!("{name}.bin")), &data)?;
    let header = SnapshotHeader {
        nx: m.nx,
        ny: m.ny,
        fields: SNAPSHOT_FIELDS.iter().map(|s| s.to_string()).collect(),
        t: rec.t,
    };
    write_json(&dir.join(format!("{name}.json")), &header)?;
    Ok(format!("snapshots/{name}"))
}

fn initial_eta(cfg: &SimConfig) -> (Vec<f64>, f64) {
    let mut eta = cfg.initial_eta.shape.sample(cfg.grid.nx, cfg.initial_eta.amplitude);
    let removed = if cfg.initial_eta.zero_mean { project_zero_mean(&mut eta) } else { 0.0 };
    (eta.into_values(), removed)
}

fn csv_rows(records: &[DiagnosticsRecord]) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.csv_values().to_vec()).collect()
}

/// Runs the configured simulation into `dir`. Breakdowns still write every
/// file; the manifest carries the terminal status.
pub fn simulate(cfg: &SimConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let reference = Reference::new(cfg.params, &cfg.vessel()?, cfg.grid.nx, cfg.grid.ny())?;
    let stepper = cfg.stepper_config();
    let (eta0, removed_mean) = initial_eta(cfg);
    fs::create_dir_all(dir)?;
    let snap_dir = dir.join("snapshots");
    if stepper.snapshot_stride > 0 {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut analyzer = Analyzer::new(&reference, stepper.dt, cfg.diagnostics.delta);
    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let summary = run(&reference, &stepper, eta0, &mut |rec: &Record| {
        analyzer.push(rec)?;
        history.extend_from_slice(&rec.eta);
        if stepper.snapshot_stride > 0 && rec.step % stepper.snapshot_stride == 0 {
            snapshots.push(snapshot(rec, &reference, &snap_dir)?);
        }
        Ok(())
    })?;
    let records = analyzer.finish()?;
    write_csv(&dir.join(TRAJECTORY_FILE), &CSV_COLUMNS, &csv_rows(&records))?;
    write_f64s(&dir.join(HISTORY_FILE), &history)?;
    let manifest = Manifest {
        config: cfg.clone(),
        run: summary,
        removed_mean,
        nx: cfg.grid.nx,
        records: records.len(),
        trajectory: TRAJECTORY_FILE.to_string(),
        eta_history: HISTORY_FILE.to_string(),
        snapshots,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Recomputes the diagnostics of a finished run from its surface history,
/// with the same coefficient refresh policy as the run.
pub fn replay(manifest: &Manifest, dir: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let cfg = &manifest.config;
    let reference = Reference::new(cfg.params, &cfg.vessel()?, cfg.grid.nx, cfg.grid.ny())?;
    let stepper = cfg.stepper_config();
    let flat = read_f64s(&dir.join(&manifest.eta_history))?;
    let n = manifest.nx + 1;
    if flat.len() != n * manifest.records {
        return Err(MuskatError::Invalid(format!(
            "surface history holds {} values, expected {} records of {n}",
            flat.len(),
            manifest.records
        )));
    }
    let mut analyzer = Analyzer::new(&reference, stepper.dt, cfg.diagnostics.delta);
    let mut state = SimState::new(Vec::new());
    for (k, eta) in flat.chunks_exact(n).enumerate() {
        state.step = k;
        state.t = k as f64 * stepper.dt;
        state.eta = eta.to_vec();
        let eval = state.evaluate(&reference, stepper.dn_refresh)?;
        analyzer.push(&Record { step: k, t: state.t, eta: state.eta.clone(), eval })?;
    }
    analyzer.finish()
}

#[derive(Clone, Debug, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Self { min, max }
    }

    fn sup_abs(values: impl IntoIterator<Item = f64>) -> f64 {
        values.into_iter().filter(|v| v.is_finite()).fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdicts {
    pub roundtrip: bool,
    pub mass: bool,
    pub decay: bool,
    pub e_phys_monotone: bool,
    pub sandwich: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub run: RunSummary,
    pub records: usize,
    /// Records with every time stencil available.
    pub complete_records: usize,
    pub roundtrip_max_rel_diff: f64,
    pub mass_drift_rel: f64,
    pub decay_fit: Option<DecayFit>,
    pub decay_fit_error: Option<String>,
    /// `(frakE + frakF) / frakE` over all records.
    pub sandwich: Range,
    /// `frakE / E_par`; its extremes give the empirical comparison constant.
    pub frak_e_over_e_par: Range,
    pub comparison_constant: f64,
    pub phi_ratio: Range,
    pub e_improved: Range,
    pub d_improved: Range,
    /// Suprema over complete records.
    pub sup_residual_energy_identity: f64,
    pub sup_residual_higher: [f64; 2],
    pub sup_s_j: [f64; 2],
    pub sup_mean_trace_weak: f64,
    pub sup_mean_trace_strong: f64,
    pub sup_surface_residual: f64,
    pub sup_contact_residual: f64,
    pub sup_green_defect: f64,
    pub verdicts: Verdicts,
}

fn max_rel_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            if x.is_nan() && y.is_nan() {
                continue;
            }
            let d = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
            worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
        }
    }
    worst
}

/// Audits the run behind `traj` (a `trajectory.csv` or its directory), writes
/// `diagnostics.json` and rewrites the CSV with the derived columns appended.
pub fn diagnose(traj: &Path) -> Result<DiagnoseReport> {
    let (dir, csv_path) = if traj.is_dir() {
        (traj.to_path_buf(), traj.join(TRAJECTORY_FILE))
    } else {
        (traj.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")), traj.to_path_buf())
    };
    let manifest: Manifest = format::read_json(&dir.join(MANIFEST_FILE))?;
    let (header, rows) = read_csv(&csv_path)?;
    if header.len() < CSV_COLUMNS.len() || header[..CSV_COLUMNS.len()] != CSV_COLUMNS {
        return Err(MuskatError::Invalid(format!("{}: unexpected header {header:?}", csv_path.display())));
    }
    let records = replay(&manifest, &dir)?;
    if records.len() != rows.len() {
        return Err(MuskatError::Invalid(format!("CSV has {} rows, history replays {}", rows.len(), records.len())));
    }
    let recorded: Vec<Vec<f64>> = rows.iter().map(|r| r[..CSV_COLUMNS.len()].to_vec()).collect();
    let diff = max_rel_diff(&recorded, &csv_rows(&records));
    let report = build_report(&manifest, &records, diff);
    write_json(&dir.join(REPORT_FILE), &report)?;
    let mut full_header: Vec<&str> = CSV_COLUMNS.to_vec();
    full_header.extend_from_slice(&DERIVED_COLUMNS);
    let full: Vec<Vec<f64>> = recorded
        .iter()
        .zip(&records)
        .map(|(r, d)| r.iter().copied().chain(d.derived_values()).collect())
        .collect();
    write_csv(&csv_path, &full_header, &full)?;
    if !report.verdicts.roundtrip {
        return Err(MuskatError::Invalid(format!(
            "trajectory does not reproduce: relative difference {diff:e} exceeds {:e}",
            manifest.config.tolerances.roundtrip
        )));
    }
    Ok(report)
}

pub fn build_report(manifest: &Manifest, records: &[DiagnosticsRecord], roundtrip: f64) -> DiagnoseReport {
    let tol = &manifest.config.tolerances;
    let complete: Vec<&DiagnosticsRecord> = records.iter().filter(|r| !r.partial).collect();
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let e_par: Vec<f64> = records.iter().map(|r| r.e_par).collect();
    let (fit, fit_err) = match decay_fit(&t, &e_par, manifest.config.fit_window()) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mass0 = records.first().map(|r| r.mass).unwrap_or(0.0);
    let norm0 = records.first().map(|r| r.eta_l2).unwrap_or(0.0);
    let drift = records.iter().map(|r| (r.mass - mass0).abs()).fold(0.0, f64::max);
    let mass_drift_rel = if norm0 > 0.0 { drift / norm0 } else { drift };
    let sandwich = Range::of(records.iter().map(|r| (r.frak_e + r.frak_f) / r.frak_e));
    let cmp = Range::of(records.iter().map(|r| r.frak_e / r.e_par));
    let excess: Vec<f64> = records.iter().map(|r| r.e_phys_excess).collect();
    let sup = |f: &dyn Fn(&DiagnosticsRecord) -> f64| Range::sup_abs(complete.iter().map(|r| f(r)));
    let verdicts = Verdicts {
        roundtrip: roundtrip <= tol.roundtrip,
        mass: mass_drift_rel <= tol.mass_drift,
        decay: fit.as_ref().is_some_and(|f| f.lambda > 0.0 && f.r_squared >= tol.decay_r_squared),
        e_phys_monotone: non_increasing_from(&excess, 3, tol.monotone_slack),
        sandwich: sandwich.min >= tol.sandwich[0] && sandwich.max <= tol.sandwich[1],
    };
    DiagnoseReport {
        run: manifest.run.clone(),
        records: records.len(),
        complete_records: complete.len(),
        roundtrip_max_rel_diff: roundtrip,
        mass_drift_rel,
        decay_fit: fit,
        decay_fit_error: fit_err,
        comparison_constant: cmp.max.max(1.0 / cmp.min),
        frak_e_over_e_par: cmp,
        sandwich,
        phi_ratio: Range::of(records.iter().map(|r| r.phi_ratio)),
        e_improved: Range::of(records.iter().map(|r| r.e_improved)),
        d_improved: Range::of(records.iter().map(|r| r.d_improved)),
        sup_residual_energy_identity: sup(&|r| r.residual_energy_identity),
        sup_residual_higher: [sup(&|r| r.residual_higher[0]), sup(&|r| r.residual_higher[1])],
        sup_s_j: [sup(&|r| r.s_j[0]), sup(&|r| r.s_j[1])],
        sup_mean_trace_weak: sup(&|r| r.mean_trace_weak),
        sup_mean_trace_strong: sup(&|r| r.mean_trace_strong),
        sup_surface_residual: sup(&|r| r.surface_residual),
        sup_contact_residual: sup(&|r| r.contact_residual),
        sup_green_defect: Range::sup_abs(records.iter().map(|r| r.green_defect)),
        verdicts,
    }
}

/// Exit code of a finished simulation: 0, or the breakdown's code.
pub fn run_exit_code(summary: &RunSummary) -> i32 {
    match &summary.status {
        RunStatus::Completed => 0,
        RunStatus::Breakdown { exit_code, .. } => *exit_code,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticValidation {
    pub rows: Vec<ConvergenceRow>,
    pub wedges: Vec<WedgeResult>,
    pub failures: Vec<String>,
}

/// Smooth benchmarks need `|order - 2| <= SMOOTH_ORDER_TOL` at every
/// refinement; corner benchmarks need L2 order at least `WEDGE_MIN_ORDER` and
/// the fitted exponent within `WEDGE_EXPONENT_TOL` at the finest grid.
pub const SMOOTH_ORDER_TOL: f64 = 0.1;
pub const WEDGE_MIN_ORDER: f64 = 1.5;
pub const WEDGE_EXPONENT_TOL: f64 = 0.05;

/// Runs the elliptic convergence suite and writes `elliptic_convergence.csv`
/// and `wedge_exponents.csv` into `dir`.
pub fn validate_elliptic(ns: &[usize], grading: f64, dir: &Path) -> Result<EllipticValidation> {
    if ns.len() < 2 || ns.iter().any(|&n| n < 2 || n % 2 == 1) || ns.windows(2).any(|p| p[1] <= p[0]) {
        return Err(MuskatError::Invalid(format!("refinement levels must be increasing even sizes, got {ns:?}")));
    }
    let rows = convergence_suite(ns, grading)?;
    let finest = *ns.last().expect("nonempty");
    let wedges = wedge_angles().into_iter().map(|o| wedge_benchmark(o, finest, finest, grading)).collect::<Result<Vec<_>>>()?;
    let mut failures = Vec::new();
    for r in rows.iter().filter(|r| r.order.is_finite()) {
        let smooth = r.benchmark.ends_with("_flat");
        if smooth && (r.order - 2.0).abs() > SMOOTH_ORDER_TOL || !smooth && r.order < WEDGE_MIN_ORDER {
            failures.push(format!("{} at N = {}: order {:.3}", r.benchmark, r.n, r.order));
        }
    }
    for w in &wedges {
        if !(w.relative_error <= WEDGE_EXPONENT_TOL) {
            failures.push(format!("wedge omega = {:.4}: exponent {:.4} vs {:.4}", w.omega, w.exponent, w.lambda));
        }
    }
    fs::create_dir_all(dir)?;
    write_table(
        &dir.join("elliptic_convergence.csv"),
        &["benchmark", "N", "L2_error", "order"],
        rows.iter().map(|r| vec![r.benchmark.clone(), r.n.to_string(), fmt_f64(r.l2_error), fmt_f64(r.order)]),
    )?;
    write_csv(
        &dir.join("wedge_exponents.csv"),
        &["omega", "lambda", "exponent", "relative_error", "N"],
        &wedges.iter().map(|w| vec![w.omega, w.lambda, w.exponent, w.relative_error, finest as f64]).collect::<Vec<_>>(),
    )?;
    Ok(EllipticValidation { rows, wedges, failures })
}

/// Scans the remainder quotients and writes the report as JSON to `out`.
pub fn scan_remainder(range: [f64; 2], step: f64, out: &Path) -> Result<ScanReport> {
    let report = remainder_scan(range, step)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_json(out, &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysParams;

    fn small(t_end: f64) -> SimConfig {
        let mut cfg = SimConfig::with_defaults(PhysParams::new(1.0, 1.0, 0.0, 4.0).unwrap(), 16);
        cfg.grid.ny = Some(4);
        cfg.stepper.dt = 2e-3;
        cfg.stepper.t_end = t_end;
        cfg
    }

    #[test]
    fn zero_duration_gives_one_record() {
        let dir = tempfile::tempdir().unwrap();
        let m = simulate(&small(0.0), dir.path()).unwrap();
        assert_eq!(m.records, 1);
        assert_eq!(m.run.status, RunStatus::Completed);
        let (h, rows) = read_csv(&dir.path().join(TRAJECTORY_FILE)).unwrap();
        assert_eq!(h, CSV_COLUMNS);
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn diagnose_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(0.03);
        cfg.output.snapshot_stride = 5;
        let m = simulate(&cfg, dir.path()).unwrap();
        assert_eq!(m.records, 16);
        assert_eq!(m.snapshots.len(), 4);
        let rep = diagnose(&dir.path().join(TRAJECTORY_FILE)).unwrap();
        assert!(rep.roundtrip_max_rel_diff <= 1e-12, "{}", rep.roundtrip_max_rel_diff);
        assert!(rep.verdicts.mass && rep.verdicts.sandwich);
        let (h, rows) = read_csv(&dir.path().join(TRAJECTORY_FILE)).unwrap();
        assert_eq!(h.len(), CSV_COLUMNS.len() + DERIVED_COLUMNS.len());
        assert_eq!(rows.len(), 16);
        // a second pass reads the widened CSV
        assert!(diagnose(dir.path()).is_ok());
        let hdr: SnapshotHeader = format::read_json(&dir.path().join("snapshots/snapshot_000005.json")).unwrap();
        assert_eq!((hdr.nx, hdr.ny, hdr.fields.len()), (16, 4, 4));
        assert!((hdr.t - 0.01).abs() < 1e-15);
        let data = read_f64s(&dir.path().join("snapshots/snapshot_000005.bin")).unwrap();
        assert_eq!(data.len(), 4 * 17 * 5);
    }

    #[test]
    fn trajectory_bodies_are_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        simulate(&small(0.01), a.path()).unwrap();
        simulate(&small(0.01), b.path()).unwrap();
        for f in [TRAJECTORY_FILE, HISTORY_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn stationary_files_have_the_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_stationary(&small(0.0), dir.path()).unwrap();
        assert_eq!(s.phi_s, -1.0);
        let (h, rows) = read_csv(&dir.path().join("stationary.csv")).unwrap();
        assert_eq!(h, ["x", "h_s", "h_w"]);
        assert_eq!(rows.len(), 17);
    }
}
