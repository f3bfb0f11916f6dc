use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use accelq::frozenlake::{build_mdp, load_map, SlipModel};
use accelq::harness::{
    read_trajectory_csv, run_config, threshold_table, AlgoName, BoundSection, ExperimentConfig, LqrSection, RunOutput,
    SystemSpec, TabularSection, Task,
};
use accelq::lqr::{build_mass_damper, closed_loop, dare_solve, optimal_gain, spectral_radius, Variant};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "accelq", version, about = "Accelerated Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tabular learners on a FrozenLake map and report losses against Q*.
    TabularRun {
        #[command(flatten)]
        common: Common,
        /// Map name (frozenlake4x4, frozenlake8x8) or path.
        #[arg(long)]
        map: Option<String>,
        /// Comma-separated subset of vanilla, speedy, aql.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<String>>,
        /// Comma-separated AQL schedule parameters.
        #[arg(long, value_delimiter = ',')]
        m_values: Option<Vec<f64>>,
    },
    /// Run PAQL variants on a mass-damper chain and report gain errors.
    LqrRun {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of vanilla, hb, nes.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long)]
        masses: Option<usize>,
        #[arg(long)]
        actuators: Option<usize>,
        /// JSON file describing the linear system.
        #[arg(long, conflicts_with_all = ["masses", "actuators"])]
        system: Option<PathBuf>,
    },
    /// Evaluate the finite-time error bound and print {v_max, h, d_max, bound}.
    Bound {
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Schedule parameter; defaults to ceil(1/gamma).
        #[arg(long)]
        m: Option<f64>,
        /// Horizon T.
        #[arg(long = "iters", default_value_t = 1000)]
        t: usize,
        /// Number of state-action pairs.
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        r_max: f64,
    },
    /// Solve a FrozenLake map for Q* and write it as CSV.
    SolveQstar {
        #[arg(long, default_value = "frozenlake4x4")]
        map: String,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// First iterate at which each cell's mean curve reaches a threshold.
    ThresholdTable {
        /// Trajectory CSV written by tabular-run or lqr-run.
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Print JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Print a mass-damper system as JSON together with its DARE solution.
    LqrSystem {
        #[arg(long, default_value_t = 2)]
        masses: usize,
        #[arg(long, default_value_t = 1)]
        actuators: usize,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use seeds base_seed..base_seed+N.
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<usize>,
    /// Comma-separated explicit seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Trajectory CSV path; the summary goes to <stem>.summary.json beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, conflicts_with = "independent_samples")]
    shared_samples: bool,
    #[arg(long)]
    independent_samples: bool,
    /// Comma-separated thresholds for the crossing table.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

impl Common {
    fn load(&self, task: Task) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::for_task(task),
        };
        if cfg.task != task {
            bail!("config task is '{}', expected '{}'", cfg.task.name(), task.name());
        }
        if let Some(n) = self.seeds {
            cfg.seeds = None;
            cfg.num_seeds = Some(n);
        }
        if let Some(list) = &self.seed_list {
            cfg.seeds = Some(list.clone());
            cfg.num_seeds = None;
        }
        if self.iters.is_some() {
            cfg.iterations = self.iters;
        }
        if self.gamma.is_some() {
            cfg.gamma = self.gamma;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        if self.shared_samples {
            cfg.shared_samples = Some(true);
        }
        if self.independent_samples {
            cfg.shared_samples = Some(false);
        }
        if self.thresholds.is_some() {
            cfg.thresholds = self.thresholds.clone();
        }
        Ok(cfg)
    }
}

fn parse_algo(s: &str) -> Result<AlgoName> {
    Ok(match s {
        "vanilla" => AlgoName::Vanilla,
        "speedy" => AlgoName::Speedy,
        "aql" => AlgoName::Aql,
        other => bail!("unknown algorithm {other:?}"),
    })
}

fn emit(text: &str) -> Result<()> {
    writeln!(io::stdout().lock(), "{text}")?;
    Ok(())
}

fn execute(cfg: ExperimentConfig) -> Result<()> {
    let resolved = cfg.resolve()?;
    let record = run_config(&resolved)?;
    if let Some(out) = &resolved.out {
        record
            .write(out)
            .with_context(|| format!("writing {}", out.display()))?;
        eprintln!("wrote {}", out.display());
    }
    let summary = record.summary()?;
    emit(&serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TabularRun {
            common,
            map,
            algos,
            m_values,
        } => {
            let mut cfg = common.load(Task::Tabular)?;
            let mut section = cfg.tabular.take().unwrap_or_else(TabularSection::default);
            if let Some(map) = map {
                section.map = map;
            }
            if let Some(algos) = algos {
                section.algorithms = algos.iter().map(|s| parse_algo(s)).collect::<Result<_>>()?;
            }
            if m_values.is_some() {
                section.m_values = m_values;
            }
            cfg.tabular = Some(section);
            execute(cfg)
        }
        Command::LqrRun {
            common,
            variants,
            masses,
            actuators,
            system,
        } => {
            let mut cfg = common.load(Task::Lqr)?;
            let mut section = cfg.lqr.take().unwrap_or_else(LqrSection::default);
            if let Some(v) = variants {
                section.variants = v.iter().map(|s| s.parse::<Variant>()).collect::<Result<_, _>>()?;
            }
            if let Some(path) = system {
                section.system = SystemSpec::File(path);
            } else if masses.is_some() || actuators.is_some() {
                let (n0, a0, eta, dt) = match section.system {
                    SystemSpec::MassDamper {
                        n_masses,
                        n_actuators,
                        eta,
                        dt,
                    } => (n_masses, n_actuators, eta, dt),
                    SystemSpec::File(_) => (2, 1, 0.1, 0.01),
                };
                section.system = SystemSpec::MassDamper {
                    n_masses: masses.unwrap_or(n0),
                    n_actuators: actuators.unwrap_or(a0),
                    eta,
                    dt,
                };
            }
            cfg.lqr = Some(section);
            execute(cfg)
        }
        Command::Bound {
            gamma,
            m,
            t,
            n,
            delta,
            r_max,
        } => {
            let mut cfg = ExperimentConfig::for_task(Task::Bound);
            cfg.gamma = Some(gamma);
            cfg.iterations = Some(t);
            cfg.bound = Some(BoundSection { m, n, delta, r_max });
            match run_config(&cfg.resolve()?)?.output {
                RunOutput::Bound(report) => emit(&serde_json::to_string(&report)?)?,
                _ => unreachable!("bound task yields a bound report"),
            }
            Ok(())
        }
        Command::SolveQstar { map, gamma, tol, out } => {
            let mdp = build_mdp(&load_map(&map)?, SlipModel::default(), gamma)?;
            let q = mdp.solve_q_star(tol)?;
            match out {
                Some(path) => {
                    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    q.write_csv(f)?;
                }
                None => q.write_csv(io::stdout().lock())?,
            }
            Ok(())
        }
        Command::ThresholdTable { input, threshold, json } => {
            let f = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let table = read_trajectory_csv(BufReader::new(f))?;
            let rows = threshold_table(&table.cells(), threshold)?;
            let mut stdout = io::stdout().lock();
            if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&rows)?)?;
            } else {
                writeln!(
                    stdout,
                    "{:<8} {:<8} {:>6} {:>14} {:>14} {:>14}",
                    "algo", "m/var", "seeds", "final_mean", "mean_cross", "median_cross"
                )?;
                for r in rows {
                    let cross = r.threshold_crossings[0]
                        .iterate
                        .map_or("not reached".to_string(), |k| k.to_string());
                    let med = r.median_seed_crossings[0]
                        .median_iterate
                        .map_or("not reached".to_string(), |k| k.to_string());
                    writeln!(
                        stdout,
                        "{:<8} {:<8} {:>6} {:>14.6e} {:>14} {:>14}",
                        r.algo,
                        r.m_or_variant.as_deref().unwrap_or("-"),
                        r.num_seeds,
                        r.final_mean_loss,
                        cross,
                        med
                    )?;
                }
            }
            Ok(())
        }
        Command::LqrSystem {
            masses,
            actuators,
            eta,
            dt,
            tol,
        } => {
            let sys = build_mass_damper(masses, actuators, eta, dt)?;
            let sol = dare_solve(&sys, tol, 10_000_000)?;
            let k = optimal_gain(&sys, &sol.p)?;
            let out = serde_json::json!({
                "system": serde_json::from_str::<serde_json::Value>(&sys.to_json()?)?,
                "dare_iterations": sol.iterations,
                "k_star": k.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                "closed_loop_spectral_radius": spectral_radius(&closed_loop(&sys, &k)),
            });
            emit(&serde_json::to_string_pretty(&out)?)?;
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        let broken_pipe = e.chain().any(|c| {
            c.downcast_ref::<io::Error>()
                .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
        });
        if broken_pipe {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
