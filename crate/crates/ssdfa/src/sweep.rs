//! Rank x sparsity sweeps: every valid cell is trained `repetitions` times
//! with a seed derived from `(master, rank, sparsity, repetition)`, so adding
//! or removing cells never changes the others.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ssdfa_core::network::{train, Precision};
use ssdfa_core::numerics::derive_seed;
use ssdfa_core::{validate_constraints, Dataset, Error as CoreError, Network, Scalar, TrainConfig, Violation};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub arch: Vec<usize>,
    pub ranks: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub repetitions: usize,
    /// Algorithm, optimizer and precision shared by every run; its seed is
    /// the master seed.
    pub base: TrainConfig,
    /// Runs executed concurrently.
    pub jobs: usize,
}

impl SweepSpec {
    pub fn master_seed(&self) -> u64 {
        self.base.seed
    }

    pub fn run_seed(&self, rank: usize, sparsity: f64, rep: usize) -> u64 {
        derive_seed(self.master_seed(), &[rank as u64, sparsity.to_bits(), rep as u64])
    }

    /// First constraint violated by any hidden layer, if any.
    pub fn check_cell(&self, rank: usize, sparsity: f64) -> Option<Violation> {
        let m = *self.arch.last()?;
        self.arch[1..self.arch.len() - 1].iter().find_map(|&n| validate_constraints(n, m, rank, sparsity).err())
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch.len() < 3 {
            return Err(Error::Usage("a sweep needs at least one hidden layer".into()));
        }
        if self.ranks.is_empty() || self.sparsities.is_empty() {
            return Err(Error::Usage("a sweep needs at least one rank and one sparsity".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Usage("repetitions must be at least 1".into()));
        }
        self.base.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub rep: usize,
    pub seed: u64,
    /// Final-epoch test accuracy; `None` when the run diverged.
    pub accuracy: Option<f64>,
    /// Final angles in degrees, first hidden layer first.
    pub angles: Vec<f64>,
    /// Angles before training.
    pub initial_angles: Vec<f64>,
    pub diverged_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Skipped { rule: &'static str, message: String },
    Ran(Vec<RunResult>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub rank: usize,
    pub sparsity: f64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellSummary {
    /// Runs that finished without diverging.
    pub runs: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub angle_mean: Option<f64>,
    pub angle_std: Option<f64>,
}

/// Mean and sample standard deviation (`n - 1`); the deviation of a
/// single value is 0.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (Some(mean), Some(var.sqrt()))
}

impl CellResult {
    pub fn is_skipped(&self) -> bool {
        matches!(self.outcome, CellOutcome::Skipped { .. })
    }

    pub fn runs(&self) -> &[RunResult] {
        match &self.outcome {
            CellOutcome::Ran(r) => r,
            CellOutcome::Skipped { .. } => &[],
        }
    }

    pub fn summary(&self) -> CellSummary {
        let runs = self.runs();
        let acc: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
        let ang: Vec<f64> = runs.iter().filter(|r| r.accuracy.is_some()).filter_map(|r| r.angles.first().copied()).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&acc);
        let (angle_mean, angle_std) = mean_std(&ang);
        CellSummary { runs: acc.len(), accuracy_mean, accuracy_std, angle_mean, angle_std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Cells in rank-major, then sparsity, order of the spec lists.
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, rank: usize, sparsity: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.rank == rank && c.sparsity == sparsity)
    }

    pub fn valid_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_skipped()).count()
    }
}

/// Progress notification for one finished run.
pub struct RunEvent<'a> {
    pub rank: usize,
    pub sparsity: f64,
    pub result: &'a RunResult,
    pub elapsed: Duration,
}

/// Trains one configuration and reports the final test accuracy and angles.
pub fn run_single(arch: &[usize], cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset, rep: usize) -> Result<RunResult> {
    match cfg.precision {
        Precision::Single => run_typed::<f32>(arch, cfg, train_set, test_set, rep),
        Precision::Double => run_typed::<f64>(arch, cfg, train_set, test_set, rep),
    }
}

fn run_typed<T: Scalar>(arch: &[usize], cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset, rep: usize) -> Result<RunResult> {
    let mut net = Network::<T>::for_training(arch, cfg)?;
    let initial_angles = net.angles(cfg.all_angles)?.iter().map(|a| a.angle_degrees).collect();
    match train(&mut net, train_set, Some(test_set), cfg) {
        Ok(report) => Ok(RunResult {
            rep,
            seed: cfg.seed,
            accuracy: report.final_test_accuracy(),
            angles: report.final_angles().iter().map(|a| a.angle_degrees).collect(),
            initial_angles,
            diverged_epoch: None,
        }),
        Err(CoreError::Diverged { epoch }) => Ok(RunResult {
            rep,
            seed: cfg.seed,
            accuracy: None,
            angles: Vec::new(),
            initial_angles,
            diverged_epoch: Some(epoch),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Runs the sweep. Jobs run on up to `spec.jobs` threads; the result does
/// not depend on the thread count.
pub fn run_sweep(
    spec: &SweepSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    on_run: &(dyn Fn(RunEvent<'_>) + Sync),
) -> Result<SweepResult> {
    spec.validate()?;
    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for &rank in &spec.ranks {
        for &sparsity in &spec.sparsities {
            let outcome = match spec.check_cell(rank, sparsity) {
                Some(v) => CellOutcome::Skipped { rule: v.rule(), message: v.to_string() },
                None => {
                    jobs.extend((0..spec.repetitions).map(|rep| (cells.len(), rank, sparsity, rep)));
                    CellOutcome::Ran(Vec::new())
                }
            };
            cells.push(CellResult { rank, sparsity, outcome });
        }
    }

    let slots: Mutex<Vec<Option<Result<RunResult>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let j = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(_, rank, sparsity, rep)) = jobs.get(j) else { break };
        let cfg = TrainConfig { rank: Some(rank), sparsity, seed: spec.run_seed(rank, sparsity, rep), ..spec.base.clone() };
        let start = Instant::now();
        let res = run_single(&spec.arch, &cfg, train_set, test_set, rep);
        if let Ok(r) = &res {
            on_run(RunEvent { rank, sparsity, result: r, elapsed: start.elapsed() });
        }
        let failed = res.is_err();
        slots.lock().expect("no panics while holding the lock")[j] = Some(res);
        if failed {
            next.store(jobs.len(), Ordering::Relaxed);
        }
    };
    let threads = spec.jobs.clamp(1, jobs.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }

    for (slot, &(cell, ..)) in slots.into_inner().expect("workers finished").into_iter().zip(&jobs) {
        let run = match slot {
            Some(r) => r?,
            None => continue,
        };
        if let CellOutcome::Ran(runs) = &mut cells[cell].outcome {
            runs.push(run);
        }
    }
    Ok(SweepResult { cells })
}
