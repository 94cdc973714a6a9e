//! Sweep execution and the delimited results table.
//!
//! Every cell (grid point x repetition) carries a seed derived from the
//! sweep's master seed. The instance RNG and the fit RNG are derived from
//! the cell seed in turn, so a single recorded number reproduces the whole
//! cell bitwise. Repetitions may run on several threads (`BMF_THREADS`);
//! rows are collected by index and written by a single writer, so the
//! output is identical regardless of thread count.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bmf_core::em;
use bmf_core::io::{binarize_ratings, holdout_split, read_ratings};
use bmf_core::matrix::{hamming_fraction, ObservedMatrix};
use bmf_core::metrics::{completion_accuracy, reconstruction_error, EvalReport};
use bmf_core::synth::{generate, SynthConfig};

use crate::spec::{SweepMode, SweepSpec};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable sub-seed derivation: `stream` distinguishes consumers (instance
/// sampling, parameter init, hold-out split) of one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut state = master ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}

/// Seed of one sweep cell, derived from the master seed and the cell's
/// (grid index, repetition) coordinates.
pub fn cell_seed(master: u64, grid_index: usize, repetition: usize) -> u64 {
    derive_seed(
        master,
        ((grid_index as u64) << 32) | repetition as u64,
    )
}

/// Metrics of one successfully evaluated cell: the evaluation report plus
/// loop bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub eval: EvalReport,
    pub outer_iters: usize,
    pub converged: bool,
}

/// One table row: either a cell result (possibly failed) or a per-grid-point
/// summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: String,
    pub mode: String,
    pub grid_value: f64,
    /// Repetition index for cells; number of successful cells for summaries.
    pub repetition: usize,
    pub seed: Option<u64>,
    pub recon_error: Option<f64>,
    pub completion_accuracy: Option<f64>,
    pub estimated_epsilon: Option<f64>,
    pub true_epsilon: Option<f64>,
    pub objective: Option<f64>,
    pub outer_iters: Option<usize>,
    pub converged: Option<bool>,
    pub wall_ms: Option<f64>,
    pub recon_error_std: Option<f64>,
    pub completion_accuracy_std: Option<f64>,
    pub estimated_epsilon_std: Option<f64>,
    pub objective_std: Option<f64>,
    pub error: Option<String>,
}

pub const TABLE_HEADER: &str = "kind,mode,grid_value,repetition,seed,recon_error,\
completion_accuracy,estimated_epsilon,true_epsilon,objective,outer_iters,converged,wall_ms,\
recon_error_std,completion_accuracy_std,estimated_epsilon_std,objective_std,error";

fn mode_name(mode: SweepMode) -> &'static str {
    match mode {
        SweepMode::NoiseSweep => "noise-sweep",
        SweepMode::CompletionSweep => "completion-sweep",
        SweepMode::Movielens => "movielens",
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let mut line = String::new();
        let _ = write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.kind,
            self.mode,
            self.grid_value,
            self.repetition,
            opt(&self.seed),
            opt(&self.recon_error),
            opt(&self.completion_accuracy),
            opt(&self.estimated_epsilon),
            opt(&self.true_epsilon),
            opt(&self.objective),
            opt(&self.outer_iters),
            opt(&self.converged),
            opt(&self.wall_ms),
            opt(&self.recon_error_std),
            opt(&self.completion_accuracy_std),
            opt(&self.estimated_epsilon_std),
            opt(&self.objective_std),
            self.error.as_deref().unwrap_or(""),
        );
        line
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 18 {
            bail!("expected 18 columns, got {}", fields.len());
        }
        fn opt_parse<T: std::str::FromStr>(s: &str) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|e| anyhow::anyhow!("bad field {s:?}: {e}"))
            }
        }
        Ok(Self {
            kind: fields[0].to_string(),
            mode: fields[1].to_string(),
            grid_value: fields[2].parse()?,
            repetition: fields[3].parse()?,
            seed: opt_parse(fields[4])?,
            recon_error: opt_parse(fields[5])?,
            completion_accuracy: opt_parse(fields[6])?,
            estimated_epsilon: opt_parse(fields[7])?,
            true_epsilon: opt_parse(fields[8])?,
            objective: opt_parse(fields[9])?,
            outer_iters: opt_parse(fields[10])?,
            converged: opt_parse(fields[11])?,
            wall_ms: opt_parse(fields[12])?,
            recon_error_std: opt_parse(fields[13])?,
            completion_accuracy_std: opt_parse(fields[14])?,
            estimated_epsilon_std: opt_parse(fields[15])?,
            objective_std: opt_parse(fields[16])?,
            error: if fields[17].is_empty() {
                None
            } else {
                Some(fields[17].to_string())
            },
        })
    }
}

/// Shared input loaded once per sweep (the binarized ratings matrix for
/// movielens mode).
pub struct SweepContext {
    pub ratings: Option<ObservedMatrix>,
}

impl SweepContext {
    pub fn prepare(spec: &SweepSpec) -> Result<Self> {
        let ratings = match spec.mode {
            SweepMode::Movielens => {
                let path = spec
                    .ratings_path
                    .as_ref()
                    .expect("validated by SweepSpec::validate");
                let records = read_ratings(path, spec.delimiter.as_deref())?;
                let (matrix, _) = binarize_ratings(&records, spec.ties_as_one)?;
                Some(matrix)
            }
            _ => None,
        };
        Ok(Self { ratings })
    }
}

/// Evaluate one sweep cell from its seed. Rerunning with the same inputs
/// reproduces the report bitwise.
pub fn run_cell(
    spec: &SweepSpec,
    ctx: &SweepContext,
    grid_value: f64,
    seed: u64,
) -> Result<CellReport> {
    match spec.mode {
        SweepMode::NoiseSweep => {
            let mut synth = SynthConfig::new(spec.n_rows, spec.n_cols, spec.rank);
            synth.target_density = spec.density;
            synth.vary_priors = spec.vary_priors;
            synth.noise = grid_value;
            synth.seed = derive_seed(seed, 1);
            let inst = generate(&synth)?;
            let config = spec.em_config(derive_seed(seed, 2))?;
            let fit = em::fit(&inst.x_noisy, &config)?;
            Ok(CellReport {
                eval: EvalReport {
                    reconstruction_error: reconstruction_error(
                        &fit.reconstruction,
                        &inst.x_clean,
                    )?,
                    completion_accuracy: None,
                    estimated_epsilon: fit.epsilon,
                    true_epsilon: Some(grid_value),
                    objective: fit.objective,
                },
                outer_iters: fit.outer_iters,
                converged: fit.converged,
            })
        }
        SweepMode::CompletionSweep => {
            let mut synth = SynthConfig::new(spec.n_rows, spec.n_cols, spec.rank);
            synth.target_density = spec.density;
            synth.vary_priors = spec.vary_priors;
            synth.noise = spec.noise;
            synth.observed_fraction = grid_value;
            synth.seed = derive_seed(seed, 1);
            let inst = generate(&synth)?;
            let config = spec.em_config(derive_seed(seed, 2))?;
            let fit = em::fit(&inst.x_noisy, &config)?;
            let heldout = inst.x_noisy.mask().complement();
            let reference = ObservedMatrix::fully_observed(inst.x_clean.clone())?;
            Ok(CellReport {
                eval: EvalReport {
                    reconstruction_error: reconstruction_error(
                        &fit.reconstruction,
                        &inst.x_clean,
                    )?,
                    completion_accuracy: Some(completion_accuracy(
                        &fit.reconstruction,
                        &reference,
                        &heldout,
                    )?),
                    estimated_epsilon: fit.epsilon,
                    true_epsilon: Some(spec.noise),
                    objective: fit.objective,
                },
                outer_iters: fit.outer_iters,
                converged: fit.converged,
            })
        }
        SweepMode::Movielens => {
            let full = ctx
                .ratings
                .as_ref()
                .expect("movielens context prepared by run_sweep");
            let (train, heldout) = holdout_split(full, grid_value, derive_seed(seed, 1))?;
            let config = spec.em_config(derive_seed(seed, 2))?;
            let fit = em::fit(&train, &config)?;
            // No clean ground truth here; the reconstruction error is
            // measured against the binarized observations themselves.
            Ok(CellReport {
                eval: EvalReport {
                    reconstruction_error: hamming_fraction(
                        &fit.reconstruction,
                        full.values(),
                        full.mask(),
                    )?,
                    completion_accuracy: Some(completion_accuracy(
                        &fit.reconstruction,
                        full,
                        &heldout,
                    )?),
                    estimated_epsilon: fit.epsilon,
                    true_epsilon: None,
                    objective: fit.objective,
                },
                outer_iters: fit.outer_iters,
                converged: fit.converged,
            })
        }
    }
}

fn thread_count() -> usize {
    std::env::var("BMF_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Sample mean and standard deviation (n-1 denominator; 0 when n < 2).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn summarize(mode: SweepMode, grid_value: f64, cells: &[BenchRow]) -> BenchRow {
    let ok: Vec<&BenchRow> = cells.iter().filter(|r| r.error.is_none()).collect();
    let collect = |f: fn(&BenchRow) -> Option<f64>| -> Vec<f64> {
        ok.iter().filter_map(|r| f(r)).collect()
    };
    let stat = |values: Vec<f64>| -> (Option<f64>, Option<f64>) {
        if values.is_empty() {
            (None, None)
        } else {
            let (mean, std) = mean_and_std(&values);
            (Some(mean), Some(std))
        }
    };
    let (recon_mean, recon_std) = stat(collect(|r| r.recon_error));
    let (acc_mean, acc_std) = stat(collect(|r| r.completion_accuracy));
    let (eps_mean, eps_std) = stat(collect(|r| r.estimated_epsilon));
    let (obj_mean, obj_std) = stat(collect(|r| r.objective));
    let (wall_mean, _) = stat(collect(|r| r.wall_ms));
    BenchRow {
        kind: "summary".into(),
        mode: mode_name(mode).into(),
        grid_value,
        repetition: ok.len(),
        seed: None,
        recon_error: recon_mean,
        completion_accuracy: acc_mean,
        estimated_epsilon: eps_mean,
        true_epsilon: cells.iter().find_map(|r| r.true_epsilon),
        objective: obj_mean,
        outer_iters: None,
        converged: None,
        wall_ms: wall_mean,
        recon_error_std: recon_std,
        completion_accuracy_std: acc_std,
        estimated_epsilon_std: eps_std,
        objective_std: obj_std,
        error: None,
    }
}

/// Run the whole sweep and return every row in output order (cells sorted by
/// grid point then repetition, followed by one summary row per grid point).
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let ctx = SweepContext::prepare(spec)?;

    let cells: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|g| (0..spec.repetitions).map(move |r| (g, r)))
        .collect();
    let results: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; cells.len()]);
    let next: Mutex<usize> = Mutex::new(0);
    let workers = thread_count().min(cells.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().unwrap();
                    let index = *guard;
                    if index >= cells.len() {
                        break;
                    }
                    *guard += 1;
                    index
                };
                let (grid_index, repetition) = cells[index];
                let grid_value = spec.grid[grid_index];
                let seed = cell_seed(spec.seed, grid_index, repetition);
                let start = Instant::now();
                let outcome = run_cell(spec, &ctx, grid_value, seed);
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let row = match outcome {
                    Ok(report) => BenchRow {
                        kind: "cell".into(),
                        mode: mode_name(spec.mode).into(),
                        grid_value,
                        repetition,
                        seed: Some(seed),
                        recon_error: Some(report.eval.reconstruction_error),
                        completion_accuracy: report.eval.completion_accuracy,
                        estimated_epsilon: Some(report.eval.estimated_epsilon),
                        true_epsilon: report.eval.true_epsilon,
                        objective: Some(report.eval.objective),
                        outer_iters: Some(report.outer_iters),
                        converged: Some(report.converged),
                        wall_ms: Some(wall_ms),
                        recon_error_std: None,
                        completion_accuracy_std: None,
                        estimated_epsilon_std: None,
                        objective_std: None,
                        error: None,
                    },
                    Err(err) => BenchRow {
                        kind: "cell".into(),
                        mode: mode_name(spec.mode).into(),
                        grid_value,
                        repetition,
                        seed: Some(seed),
                        recon_error: None,
                        completion_accuracy: None,
                        estimated_epsilon: None,
                        true_epsilon: None,
                        objective: None,
                        outer_iters: None,
                        converged: None,
                        wall_ms: Some(wall_ms),
                        recon_error_std: None,
                        completion_accuracy_std: None,
                        estimated_epsilon_std: None,
                        objective_std: None,
                        error: Some(err.to_string().replace([',', '\n'], ";")),
                    },
                };
                results.lock().unwrap()[index] = Some(row);
            });
        }
    });

    let mut rows: Vec<BenchRow> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell produced a row"))
        .collect();
    let summaries: Vec<BenchRow> = spec
        .grid
        .iter()
        .enumerate()
        .map(|(grid_index, &grid_value)| {
            let cells =
                &rows[grid_index * spec.repetitions..(grid_index + 1) * spec.repetitions];
            summarize(spec.mode, grid_value, cells)
        })
        .collect();
    rows.extend(summaries);
    Ok(rows)
}

/// Write rows to the spec's output path with the fixed header.
pub fn write_table(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut text = String::from(TABLE_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parse a results table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<Vec<BenchRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == TABLE_HEADER => {}
        other => bail!("unexpected header {other:?}"),
    }
    lines.map(BenchRow::from_csv).collect()
}
