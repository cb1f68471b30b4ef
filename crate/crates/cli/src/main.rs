use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cachecast::config::{Experiment, ExperimentConfig};
use cachecast::learner::LearnerState;
use cachecast::reactive::Policy;
use cachecast::rng::{purpose, stream};
use cachecast::scalar::Cost;
use cachecast::sim::{aggregate, run_seeds, sweep, EpisodeResult, SimSetup, SweepRow, CSV_HEADER};
use cachecast::traffic::sample_event;
use cachecast::value::{analytic_table, bounds, exact_value_iteration, ValueTable};
use cachecast::Rational;
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "cachecast",
    version,
    about = "Cache-assisted multicast experiments"
)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "cachecast.toml")]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated policy list, e.g. proposed,baseline1.
    #[arg(long, global = true, value_delimiter = ',')]
    policies: Option<Vec<Policy>>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the planning table and write it to `table.csv`.
    BuildTables,
    /// Check lower <= exact <= refined <= upper on the small exact instance.
    BoundCheck {
        /// Check this table file instead of the instance's own table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run every policy over the configured seeds.
    Simulate,
    /// Run the `[sweep]` grid.
    Sweep,
    /// Replay synthetic requests through the learner and track its error.
    Learn {
        /// Start from the uniform-user table instead of zeros.
        #[arg(long)]
        from_uniform: bool,
    },
}

struct Run {
    exp: Experiment,
    out: PathBuf,
    policies: Vec<Policy>,
}

impl Run {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = ExperimentConfig::load(&cli.config)
            .with_context(|| format!("loading {}", cli.config.display()))?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &cli.out {
            cfg.output.dir = out.to_string_lossy().into_owned();
        }
        if let Some(p) = &cli.policies {
            cfg.sim.policies = p.clone();
        }
        cfg.validate()?;
        let exp = Experiment::build(&cfg)?;
        let out = PathBuf::from(&cfg.output.dir);
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(out.join("config.toml"), cfg.to_toml()?)?;
        Ok(Self {
            policies: cfg.sim.policies.clone(),
            exp,
            out,
        })
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let run = Run::new(cli)?;
    match &cli.command {
        Command::BuildTables => build_tables(&run),
        Command::BoundCheck { table } => bound_check(&run, table.as_deref()),
        Command::Simulate => simulate(&run),
        Command::Sweep => run_sweep(&run),
        Command::Learn { from_uniform } => learn(&run, *from_uniform),
    }
}

fn build_tables(run: &Run) -> Result<ExitCode> {
    let table = run.exp.planning_table()?;
    let path = run.write("table.csv", &table.to_flat())?;
    println!("wrote {}", path.display());
    println!("N,v_star,se,{}", per_cache_header(table.n_caches()));
    for n in 1..=table.n_max() {
        let mut line = format!("{n},{},{}", table.v_star[n], table.v_star_se[n]);
        for c in 0..table.n_caches() {
            write!(line, ",{}", table.v_one_se[c][n])?;
        }
        println!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

fn per_cache_header(n: usize) -> String {
    (1..=n)
        .map(|c| format!("se_one_{c}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn exact_table(t: &ValueTable<f64>) -> Result<ValueTable<Rational>> {
    let conv = |row: &[f64]| row.iter().map(|&x| Rational::from_f64_exact(x)).collect();
    Ok(ValueTable::new(
        t.n_segments,
        t.segment_bits,
        conv(&t.v_star),
        t.v_one.iter().map(|r| conv(r)).collect(),
    )?)
}

fn bound_check(run: &Run, table_file: Option<&Path>) -> Result<ExitCode> {
    let inst = run.exp.bound_instance()?;
    let max_stage = run.exp.config.bound_check.max_stage;
    let table = match table_file {
        Some(path) => {
            let t = exact_table(&ValueTable::load(path)?)?;
            if t.n_caches() != inst.n_caches()
                || t.n_segments != inst.n_segments
                || t.n_max() < max_stage
            {
                bail!(
                    "table {} does not fit the bound-check instance",
                    path.display()
                );
            }
            t
        }
        None => analytic_table(&inst.costs, inst.n_segments, max_stage),
    };
    let exact = exact_value_iteration(&inst, max_stage);
    let mut csv = String::from("state,N,lower,exact,refined,upper,ok\n");
    let mut violations = 0;
    for n in 0..=max_stage {
        for mask in 0..inst.n_states() as u64 {
            let b = bounds(&inst, &table, &inst.state(mask), n)?;
            let v = exact.get(n, mask);
            let ok = b.lower <= *v && *v <= b.refined && b.refined <= b.upper;
            violations += usize::from(!ok);
            writeln!(
                csv,
                "{mask:0width$b},{n},{},{},{},{},{ok}",
                b.lower.to_f64_lossy(),
                v.to_f64_lossy(),
                b.refined.to_f64_lossy(),
                b.upper.to_f64_lossy(),
                width = inst.n_bits(),
            )?;
        }
    }
    let path = run.write("bound_check.csv", &csv)?;
    let checked = (max_stage + 1) * inst.n_states();
    println!(
        "{checked} (state, stage) pairs, {violations} violations; wrote {}",
        path.display()
    );
    Ok(if violations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn setup(run: &Run) -> Result<SimSetup> {
    Ok(run.exp.sim_setup(run.exp.planning_table()?)?)
}

fn rows_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn per_seed_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("sweep_param,policy,seed,total_cost\n");
    for r in rows {
        let param = r.sweep_param.map_or(String::new(), |v| v.to_string());
        for (k, c) in r.per_seed.iter().enumerate() {
            s.push_str(&format!("{param},{},{k},{c}\n", r.policy));
        }
    }
    s
}

#[derive(Serialize)]
struct LogLine<'a> {
    seed: u64,
    policy: Policy,
    #[serde(flatten)]
    event: &'a cachecast::sim::EventRecord,
}

fn write_log(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ep in episodes {
        for event in &ep.log {
            let line = LogLine {
                seed: ep.seed_index,
                policy: ep.policy,
                event,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate(run: &Run) -> Result<ExitCode> {
    let setup = setup(run)?;
    let seeds = run.exp.config.sim.seeds;
    let logs = run.exp.config.output.event_log;
    let mut rows = Vec::new();
    for &policy in &run.policies {
        let eps = run_seeds(&setup, policy, seeds, logs)?;
        if logs {
            write_log(&run.out.join(format!("events_{policy}.jsonl")), &eps)?;
        }
        rows.push(aggregate(&setup, policy, None, &eps));
    }
    run.write("per_seed.csv", &per_seed_csv(&rows))?;
    let path = run.write("results.csv", &rows_csv(&rows))?;
    print!("{}", rows_csv(&rows));
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(run: &Run) -> Result<ExitCode> {
    let Some(grid) = &run.exp.config.sweep else {
        bail!("config has no [sweep] section");
    };
    let setup = setup(run)?;
    let rows = sweep(
        &setup,
        Some((grid.param, &grid.values)),
        &run.policies,
        run.exp.config.sim.seeds,
    )?;
    run.write("per_seed.csv", &per_seed_csv(&rows))?;
    let path = run.write("sweep.csv", &rows_csv(&rows))?;
    print!("{}", rows_csv(&rows));
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

/// Largest and mean relative error over every `v_star` and `v_one` entry.
fn table_error(est: &ValueTable<f64>, truth: &ValueTable<f64>) -> (f64, f64) {
    let mut errs = Vec::new();
    for n in 1..=truth.n_max() {
        errs.push((est.v_star[n] / truth.v_star[n] - 1.0).abs());
        for c in 0..truth.n_caches() {
            errs.push((est.v_one[c][n] / truth.v_one[c][n] - 1.0).abs());
        }
    }
    let max = errs.iter().copied().fold(0.0, f64::max);
    (max, errs.iter().sum::<f64>() / errs.len() as f64)
}

fn learn(run: &Run, from_uniform: bool) -> Result<ExitCode> {
    let exp = &run.exp;
    let file = exp.reference_file();
    let truth = exp.analytic_table(&exp.users)?;
    let prior = if from_uniform {
        exp.uniform_table()?
    } else {
        ValueTable::zeros(
            exp.layout.n_caches(),
            file.num_segments,
            file.segment_bits,
            truth.n_max(),
        )
    };
    let threshold = exp
        .config
        .value
        .learner_threshold
        .unwrap_or_else(|| LearnerState::default_threshold(&prior));
    let mut learner = LearnerState::init(&prior, threshold)?;
    let mut rng = stream(exp.config.seed, 0, purpose::LEARNER);
    let events = exp.config.value.learn_events;

    let mut csv = String::from("events,max_rel_error,mean_rel_error,last_change,converged\n");
    let mut next = 1;
    for t in 1..=events {
        let ev = sample_event(file, 0.0, &exp.users, &exp.layout, &exp.links, &mut rng);
        learner.observe(&ev, file, &exp.phy)?;
        if t == next || t == events {
            let (max, mean) = table_error(learner.estimates(), &truth);
            writeln!(
                csv,
                "{t},{max},{mean},{},{}",
                learner.last_change().unwrap_or(f64::NAN),
                learner.converged()
            )?;
            // 1, 2, 5, 10, 20, 50, ...
            while next <= t {
                let decade = 10usize.pow(next.ilog10());
                next = match next / decade {
                    1 => 2 * decade,
                    2 => 5 * decade,
                    _ => 10 * decade,
                };
            }
        }
    }
    run.write("learned_table.csv", &learner.estimates().to_flat())?;
    let path = run.write("learn.csv", &csv)?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
