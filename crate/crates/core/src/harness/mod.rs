//! Multi-seed experiment runner: config resolution, parallel execution of
//! cells, aggregation, threshold tables and CSV/JSON output.
//!
//! Seed derivation: every seed `s` of the resolved seed list drives one
//! paired tabular run. All learners read stream 0 of `s` when samples are
//! shared; learner `i` reads stream `i + 1` otherwise. An LQR cell
//! `(variant, s)` reads stream 0 of `s`, so variants see the same initial
//! states and noise draws until their gains diverge.

mod config;
mod io;
mod stats;

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    AlgoName, BoundSection, ExperimentConfig, LqrSection, ResolvedConfig, SystemSpec, TabularSection, Task,
    SCHEMA_VERSION,
};
pub use io::{
    read_trajectory_csv, summarize_cell, summary_path, threshold_table, CellCurves, CellSummary, Summary,
    TrajectoryTable, GAIN_HEADER, LOSS_HEADER,
};
pub use stats::{aggregate, first_crossing, median_crossing, Aggregate, Crossing, MedianCrossing};

use crate::bounds::{theorem1_bound, BoundParams};
use crate::error::{Error, Result};
use crate::learners::{run_learners, write_loss_csv, Sampling};
use crate::lqr::{lqr_oracle, run_lqr_experiment, write_gain_csv};

/// Output of [`bound_report`] and of the `bound` task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub v_max: f64,
    pub h: f64,
    pub d_max: f64,
    pub bound: f64,
}

pub fn bound_report(p: &BoundParams) -> BoundReport {
    BoundReport {
        v_max: p.v_max,
        h: p.h,
        d_max: p.d_max,
        bound: theorem1_bound(p),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Tabular(Vec<crate::learners::LossTrajectory>),
    Lqr(Vec<crate::lqr::GainErrorTrajectory>),
    Bound(BoundReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub task: Task,
    pub thresholds: Vec<f64>,
    pub output: RunOutput,
}

impl RunRecord {
    pub fn table(&self) -> Option<TrajectoryTable> {
        match &self.output {
            RunOutput::Tabular(t) => Some(TrajectoryTable::Loss(t.clone())),
            RunOutput::Lqr(t) => Some(TrajectoryTable::Gain(t.clone())),
            RunOutput::Bound(_) => None,
        }
    }

    pub fn cells(&self) -> Vec<CellCurves> {
        self.table().map(|t| t.cells()).unwrap_or_default()
    }

    pub fn summary(&self) -> Result<Summary> {
        let cells = self
            .cells()
            .iter()
            .map(|c| summarize_cell(c, &self.thresholds))
            .collect::<Result<_>>()?;
        Ok(Summary {
            config_hash: self.config_hash.clone(),
            task: self.task.name().to_string(),
            cells,
        })
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match &self.output {
            RunOutput::Tabular(t) => write_loss_csv(t, &mut buf)?,
            RunOutput::Lqr(t) => write_gain_csv(t, &mut buf)?,
            RunOutput::Bound(b) => {
                serde_json::to_writer_pretty(&mut buf, b)?;
                buf.push(b'\n');
            }
        }
        Ok(buf)
    }

    /// Writes the trajectory CSV to `out` and the summary next to it. The
    /// `bound` task writes its JSON report to `out` instead.
    pub fn write(&self, out: &Path) -> Result<()> {
        io::write_file(out, &self.csv_bytes()?)?;
        if !matches!(self.output, RunOutput::Bound(_)) {
            let mut json = serde_json::to_vec_pretty(&self.summary()?)?;
            json.push(b'\n');
            io::write_file(&summary_path(out), &json)?;
        }
        Ok(())
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Executes every cell; results are in canonical order whatever the schedule.
pub fn run_config(cfg: &ResolvedConfig) -> Result<RunRecord> {
    let output = match cfg.task {
        Task::Tabular => {
            let mdp = cfg.build_tabular_mdp().map_err(|e| e.context("building tabular MDP"))?;
            let tol = cfg.tabular.as_ref().map_or(1e-12, |t| t.qstar_tol);
            let q_star = mdp.solve_q_star(tol).map_err(|e| e.context("solving Q*"))?;
            let algos = cfg.tabular_algorithms()?;
            let sampling = if cfg.shared_samples {
                Sampling::Shared
            } else {
                Sampling::Independent
            };
            let per_seed: Vec<_> = with_pool(cfg.jobs, || {
                cfg.seeds
                    .par_iter()
                    .map(|&seed| {
                        run_learners(&mdp, &algos, cfg.iterations, seed, &q_star, sampling)
                            .map_err(|e| e.context(format!("tabular run, seed {seed}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            // Cell-major: all seeds of the first learner, then the next.
            let mut out = Vec::with_capacity(algos.len() * cfg.seeds.len());
            for i in 0..algos.len() {
                for run in &per_seed {
                    out.push(run[i].clone());
                }
            }
            RunOutput::Tabular(out)
        }
        Task::Lqr => {
            let l = cfg
                .lqr
                .as_ref()
                .ok_or_else(|| Error::Config("missing lqr section".into()))?;
            let sys = l.system.build().map_err(|e| e.context("building LQR system"))?;
            let oracle =
                lqr_oracle(&sys, cfg.gamma, l.dare_tol, l.dare_max_iter).map_err(|e| e.context("DARE oracle"))?;
            let settings = l.settings(cfg.gamma, cfg.iterations);
            let jobs: Vec<_> = l
                .variants
                .iter()
                .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
                .collect();
            let trajs = with_pool(cfg.jobs, || {
                jobs.par_iter()
                    .map(|&(variant, seed)| {
                        run_lqr_experiment(&sys, &oracle, variant, seed, &settings)
                            .map_err(|e| e.context(format!("LQR run, variant {variant}, seed {seed}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            RunOutput::Lqr(trajs)
        }
        Task::Bound => {
            let b = cfg
                .bound
                .as_ref()
                .ok_or_else(|| Error::Config("missing bound section".into()))?;
            let m = b.m.unwrap_or((1.0 / cfg.gamma).ceil());
            let p = BoundParams::new(cfg.gamma, m, cfg.iterations, b.n, b.delta, b.r_max)?;
            RunOutput::Bound(bound_report(&p))
        }
    };
    Ok(RunRecord {
        config_hash: cfg.config_hash(),
        task: cfg.task,
        thresholds: cfg.thresholds.clone(),
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_tabular() -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(Task::Tabular);
        c.seeds = Some(vec![0]);
        c.iterations = Some(10);
        c
    }

    #[test]
    fn row_counts() {
        let rec = run_config(&tiny_tabular().resolve().unwrap()).unwrap();
        let RunOutput::Tabular(ts) = &rec.output else { panic!() };
        assert_eq!(ts.len(), 4);
        assert!(ts.iter().all(|t| t.losses.len() == 11));
        let csv = String::from_utf8(rec.csv_bytes().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4 * 11);
    }

    #[test]
    fn jobs_do_not_change_output() {
        let mut c = tiny_tabular();
        c.seeds = Some(vec![5, 1, 3]);
        let a = run_config(&c.resolve().unwrap()).unwrap();
        c.jobs = Some(2);
        let b = run_config(&c.resolve().unwrap()).unwrap();
        assert_eq!(a, b);
        let RunOutput::Tabular(ts) = &a.output else { panic!() };
        assert_eq!(ts.iter().map(|t| t.seed).take(3).collect::<Vec<_>>(), vec![5, 1, 3]);
    }

    #[test]
    fn bound_task() {
        let mut c = ExperimentConfig::for_task(Task::Bound);
        c.bound = Some(BoundSection {
            m: Some(2.0),
            n: 64,
            delta: 0.1,
            r_max: 1.0,
        });
        let rec = run_config(&c.resolve().unwrap()).unwrap();
        let RunOutput::Bound(b) = rec.output else { panic!() };
        assert_eq!((b.v_max, b.h, b.d_max), (2.0, 2.5, 8.0));
        assert!((b.bound - 3.8456).abs() < 5e-4);
    }

    #[test]
    fn lqr_task_small() {
        let mut c = ExperimentConfig::for_task(Task::Lqr);
        c.seeds = Some(vec![0]);
        c.iterations = Some(5);
        c.lqr = Some(LqrSection {
            variants: vec![crate::lqr::Variant::Hb],
            ..Default::default()
        });
        let rec = run_config(&c.resolve().unwrap()).unwrap();
        let s = rec.summary().unwrap();
        assert_eq!(s.cells.len(), 1);
        assert_eq!(s.cells[0].m_or_variant.as_deref(), Some("hb"));
        assert_eq!(s.cells[0].threshold_crossings[0].threshold, 0.1);
    }
}
