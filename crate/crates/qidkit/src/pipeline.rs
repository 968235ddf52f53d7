//! Command implementations behind the CLI: end-to-end identification runs,
//! Monte Carlo sweeps, and figure-ready CSV extraction.
//!
//! All artifacts are flat files. Floats in CSVs are printed with 17
//! significant digits so they round-trip exactly; identical config + seed
//! therefore produces byte-identical artifacts.

use crate::blackbox::BlackBox;
use crate::config::{ConfigError, RunConfig};
use crate::estimator::{identify, EstimateError, Mode, RawData, SamplingPlan};
use crate::report::{gauge_align, Cost, Report};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use thiserror::Error;

/// Name of the raw-scan artifact within a run directory.
pub const RAW_FILE: &str = "raw.json";
/// Name of the report artifact within a run directory.
pub const REPORT_FILE: &str = "report.json";

/// Errors from the command layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Configuration could not be loaded or is invalid (exit 2).
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// An estimation stage failed (exit 3).
    #[error("identification failed: {0}")]
    Stage(#[from] EstimateError),
    /// An artifact could not be written or read back (exit 4).
    #[error("i/o failure on {path}: {source}")]
    Io {
        /// Offending path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// A run directory lacks the artifact a command needs (exit 2).
    #[error("missing or unreadable run artifact {path}: {reason}")]
    BadRunDir {
        /// Offending path.
        path: PathBuf,
        /// What went wrong.
        reason: String,
    },
    /// Figures were requested for a run that did not retain raw scans
    /// (exit 2).
    #[error("no raw scan data at {path}; re-run identify with --keep-raw")]
    MissingRawData {
        /// Expected raw-data path.
        path: PathBuf,
    },
}

impl PipelineError {
    /// The process exit code for this error: 2 config, 3 stage, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage(_) => 3,
            PipelineError::Io { .. } => 4,
            PipelineError::BadRunDir { .. } => 2,
            PipelineError::MissingRawData { .. } => 2,
        }
    }
}

/// Formats a float with 17 significant digits (round-trip safe).
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Resolves the output directory: CLI flag first, config fallback.
fn resolve_out_dir(
    flag: Option<&Path>,
    config: &RunConfig,
) -> Result<PathBuf, PipelineError> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| {
            PipelineError::Config(ConfigError::Invalid {
                reason: "no output directory: pass --out or set out_dir in the config"
                    .to_string(),
            })
        })
}

/// Runs one full identification and writes `report.json` (and `raw.json`
/// when `keep_raw` is set) into the output directory. Returns the report.
pub fn cmd_identify(
    config_path: &Path,
    out_dir: Option<&Path>,
    mode_override: Option<Mode>,
    seed_override: Option<u64>,
    keep_raw: bool,
) -> Result<Report, PipelineError> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(mode) = mode_override {
        config.mode = mode;
    }
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let out = resolve_out_dir(out_dir, &config)?;

    let truth = config.true_model();
    let plan = config.sampling_plan();
    let mut handle = BlackBox::new(truth.clone(), config.seed);
    let (mut model, raw) = identify(&mut handle, &config.field_grids, &plan, config.reference)?;

    let comparison = gauge_align(&truth, &model);
    model.hs_errors = Some(comparison.hs_errors.clone());
    let report = Report {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        model,
        truth: comparison,
        cost: Cost {
            experiments: handle.experiments_run(),
            shots: handle.shots_drawn(),
        },
    };

    create_dir(&out)?;
    let mut report_json =
        serde_json::to_string_pretty(&report).expect("report serialization is infallible");
    report_json.push('\n');
    write_file(&out.join(REPORT_FILE), report_json.as_bytes())?;
    if keep_raw {
        let mut raw_json =
            serde_json::to_string(&raw).expect("raw-data serialization is infallible");
        raw_json.push('\n');
        write_file(&out.join(RAW_FILE), raw_json.as_bytes())?;
    }
    Ok(report)
}

/// One sweep cell result: HS errors per axis, or the failure message.
struct SweepCell {
    seed: u64,
    shots: u64,
    eta: f64,
    outcome: Result<Vec<f64>, String>,
}

/// Worker count for sweeps: `QIDKIT_THREADS` (0 or 1 = sequential),
/// defaulting to the available parallelism.
fn sweep_workers(cells: usize) -> usize {
    let requested = std::env::var("QIDKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    requested.max(1).min(cells.max(1))
}

/// Runs every (seed, shots, eta) combination of the config's sweep lists
/// and writes one `sweep.csv` row per combination and axis. Cells run in
/// sampled mode with per-cell black boxes, so the row set is deterministic
/// regardless of worker count. Returns the CSV path.
pub fn cmd_sweep(config_path: &Path, out_dir: Option<&Path>) -> Result<PathBuf, PipelineError> {
    let config = RunConfig::load(config_path)?;
    let out = resolve_out_dir(out_dir, &config)?;
    let sweep = config.sweep.clone().ok_or_else(|| {
        PipelineError::Config(ConfigError::Invalid {
            reason: "config has no sweep section".to_string(),
        })
    })?;

    let mut combos: Vec<(u64, u64, f64)> = Vec::new();
    for &seed in &sweep.seeds {
        for &shots in &sweep.shots {
            for &eta in &sweep.etas {
                combos.push((seed, shots, eta));
            }
        }
    }

    let truth = config.true_model();
    let base_plan = config.sampling_plan();
    let run_cell = |&(seed, shots, eta): &(u64, u64, f64)| -> SweepCell {
        let plan = SamplingPlan {
            shots,
            eta,
            mode: Mode::Sampled,
            ..base_plan
        };
        let mut handle = BlackBox::new(truth.clone(), seed);
        let outcome = identify(&mut handle, &config.field_grids, &plan, config.reference)
            .map(|(model, _)| gauge_align(&truth, &model).hs_errors)
            .map_err(|e| e.to_string());
        SweepCell {
            seed,
            shots,
            eta,
            outcome,
        }
    };

    let workers = sweep_workers(combos.len());
    let mut cells: Vec<Option<SweepCell>> = Vec::new();
    cells.resize_with(combos.len(), || None);
    if workers <= 1 {
        for (i, combo) in combos.iter().enumerate() {
            cells[i] = Some(run_cell(combo));
        }
    } else {
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, SweepCell)>();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                let combos = &combos;
                let run_cell = &run_cell;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= combos.len() {
                        break;
                    }
                    let cell = run_cell(&combos[i]);
                    if tx.send((i, cell)).is_err() {
                        break;
                    }
                });
            }
        });
        drop(tx);
        for (i, cell) in rx {
            cells[i] = Some(cell);
        }
    }

    let mut csv = String::from("seed,shots,eta,m,hs_error,status\n");
    for cell in cells.into_iter().map(|c| c.expect("all cells filled")) {
        match &cell.outcome {
            Ok(errors) => {
                for (m, err) in errors.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{},{},{},ok\n",
                        cell.seed,
                        cell.shots,
                        fmt_float(cell.eta),
                        m,
                        fmt_float(*err)
                    ));
                }
            }
            Err(message) => {
                for m in 0..=truth.control_count() {
                    csv.push_str(&format!(
                        "{},{},{},{},,{}\n",
                        cell.seed,
                        cell.shots,
                        fmt_float(cell.eta),
                        m,
                        csv_escape(message)
                    ));
                }
            }
        }
    }

    create_dir(&out)?;
    let path = out.join("sweep.csv");
    write_file(&path, csv.as_bytes())?;
    Ok(path)
}

/// Quotes a CSV field if it contains separators or quotes.
fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn read_run_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::BadRunDir {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::BadRunDir {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Extracts figure-ready CSVs from a completed identify run that retained
/// raw scans:
///
/// - `freq_scan.csv`, `fourier.csv`, `refine_scan.csv` — the stage-1 coarse
///   scan, its spectrum, and the refinement window per axis;
/// - `phi_scan.csv` — stage-2 coarse points, refinement points, and sampled
///   fitted parabolas per axis;
/// - `axis_components.csv` — per-level Cartesian components with fitted and
///   true lines.
///
/// Files are written into the run directory.
pub fn cmd_figures(run_dir: &Path) -> Result<(), PipelineError> {
    let report_path = run_dir.join(REPORT_FILE);
    let report: Report = read_run_json(&report_path)?;
    let raw_path = run_dir.join(RAW_FILE);
    if !raw_path.exists() {
        return Err(PipelineError::MissingRawData { path: raw_path });
    }
    let raw: RawData = read_run_json(&raw_path)?;

    let scan_csv = |scans: &[crate::estimator::ScanSeries]| {
        let mut csv = String::from("control,level,field,t,z\n");
        for s in scans {
            for (&x, &y) in s.xs.iter().zip(s.ys.iter()) {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.control,
                    s.level,
                    fmt_float(s.field),
                    fmt_float(x),
                    fmt_float(y)
                ));
            }
        }
        csv
    };
    write_file(&run_dir.join("freq_scan.csv"), scan_csv(&raw.freq_scans).as_bytes())?;
    write_file(
        &run_dir.join("refine_scan.csv"),
        scan_csv(&raw.refine_scans).as_bytes(),
    )?;

    let mut fourier = String::from("control,level,field,omega,magnitude\n");
    for s in &raw.spectra {
        for (&omega, &magnitude) in s.omegas.iter().zip(s.magnitudes.iter()) {
            fourier.push_str(&format!(
                "{},{},{},{},{}\n",
                s.control,
                s.level,
                fmt_float(s.field),
                fmt_float(omega),
                fmt_float(magnitude)
            ));
        }
    }
    write_file(&run_dir.join("fourier.csv"), fourier.as_bytes())?;

    let mut phi = String::from("control,level,field,section,alpha,z\n");
    for s in &raw.phi_scans {
        let mut rows = |section: &str, xs: &[f64], ys: &[f64]| {
            for (&x, &y) in xs.iter().zip(ys.iter()) {
                phi.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.control,
                    s.level,
                    fmt_float(s.field),
                    section,
                    fmt_float(x),
                    fmt_float(y)
                ));
            }
        };
        rows("coarse", &s.coarse_xs, &s.coarse_ys);
        rows("refine_min", &s.refine_min_xs, &s.refine_min_ys);
        rows("refine_max", &s.refine_max_xs, &s.refine_max_ys);
        // Sample each fitted parabola across its refinement window so the
        // fit can be drawn as a smooth curve.
        let mut fit_rows = |section: &str,
                            vertex: &crate::signal::ParabolaVertex,
                            xs: &[f64]| {
            if let (Some(&lo), Some(&hi)) = (xs.first(), xs.last()) {
                let n = 50;
                for i in 0..n {
                    let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                    phi.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        s.control,
                        s.level,
                        fmt_float(s.field),
                        section,
                        fmt_float(x),
                        fmt_float(vertex.eval(x))
                    ));
                }
            }
        };
        fit_rows("fit_min", &s.vertex_min, &s.refine_min_xs);
        fit_rows("fit_max", &s.vertex_max, &s.refine_max_xs);
    }
    write_file(&run_dir.join("phi_scan.csv"), phi.as_bytes())?;

    let mut components = String::from(
        "control,field,x_est,y_est,z_est,x_fit,y_fit,z_fit,x_true,y_true,z_true\n",
    );
    for record in report.model.axes.iter().filter(|a| a.control > 0) {
        let m = record.control;
        let fits = report
            .model
            .component_fits
            .iter()
            .find(|f| f.control == m)
            .expect("fits exist for every control");
        let truth =
            report.truth.aligned_d0 + report.truth.aligned_dm[m - 1] * record.field;
        components.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            m,
            fmt_float(record.field),
            fmt_float(record.cartesian.x),
            fmt_float(record.cartesian.y),
            fmt_float(record.cartesian.z),
            fmt_float(fits.x.eval(record.field)),
            fmt_float(fits.y.eval(record.field)),
            fmt_float(fits.z.eval(record.field)),
            fmt_float(truth.x),
            fmt_float(truth.y),
            fmt_float(truth.z)
        ));
    }
    write_file(&run_dir.join("axis_components.csv"), components.as_bytes())?;
    Ok(())
}

/// Prints a short human summary of a finished identify run.
pub fn print_identify_summary(report: &Report, out: &Path) {
    let mut line = format!(
        "wrote {} — hs errors:",
        out.join(REPORT_FILE).display()
    );
    for (m, err) in report.truth.hs_errors.iter().enumerate() {
        line.push_str(&format!(" d{m}={err:.4}"));
    }
    let _ = writeln!(std::io::stdout(), "{line}");
    let _ = writeln!(
        std::io::stdout(),
        "cost: {} experiments, {} shots",
        report.cost.experiments,
        report.cost.shots
    );
}
