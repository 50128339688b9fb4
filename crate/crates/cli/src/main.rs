//! Command-line front end for training runs, novelty evaluations, grid searches and plots.

use std::path::PathBuf;
use std::process::ExitCode;

use adventurer_core::harness::config::RunConfig;
use adventurer_core::harness::corpus::two_room;
use adventurer_core::harness::experiments::{eval_novelty_settings, grid_search, rep_seed, GridParam, Table};
use adventurer_core::harness::{emit_plots, train_to_dir};
use adventurer_core::novelty::NoveltyMethod;
use adventurer_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adventurer", version, about = "Novelty-driven exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write metrics and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the two-room corpus with one estimator and report both KL objectives.
    EvalNovelty {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
    },
    /// Sweep alpha or beta over the values configured in `grid.alpha` / `grid.beta`.
    GridSearch {
        #[arg(long)]
        param: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate metrics files into SVG charts and CSV tables.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_table(table: &Table, dir: &std::path::Path, name: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    table.write_csv(std::fs::File::create(&path)?)?;
    Ok(path)
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            let dir = cfg.output.dir.clone();
            let outcome = train_to_dir(&cfg, &dir)?;
            if let Some(last) = outcome.records.last() {
                println!("{}", last.to_line()?);
            }
            eprintln!("wrote {}", dir.join("metrics.jsonl").display());
        }
        Command::EvalNovelty { config, method } => {
            let cfg = RunConfig::from_file(&config)?;
            let method: NoveltyMethod = method.parse()?;
            let e = &cfg.experiment;
            let mut est = cfg.novelty.estimator(adventurer_core::harness::corpus::BITPLANE);
            est.method = method;
            let mut table = Table::new(&["method", "seed", "setting1", "setting2", "kl_1b_1a", "kl_2b_1a", "kl2_1b_1a", "kl2_2b_2a", "degenerate"]);
            for i in 0..e.seeds {
                let seed = rep_seed(cfg.training.seed, i);
                let corpus = two_room(seed, e.per_part, e.flip)?;
                let r = eval_novelty_settings(&corpus, &est, e.fit_steps, e.bins, seed)?;
                table.push(vec![
                    method.to_string(),
                    seed.to_string(),
                    r.setting1.to_string(),
                    r.setting2.to_string(),
                    r.kl_1b_1a.to_string(),
                    r.kl_2b_1a.to_string(),
                    r.kl2_1b_1a.to_string(),
                    r.kl2_2b_2a.to_string(),
                    (r.degenerate1 || r.degenerate2).to_string(),
                ]);
            }
            print!("{}", table.to_csv()?);
            let path = write_table(&table, &cfg.output.dir, &format!("eval-novelty-{method}.csv"))?;
            eprintln!("wrote {}", path.display());
        }
        Command::GridSearch { param, config } => {
            let cfg = RunConfig::from_file(&config)?;
            let param: GridParam = param.parse()?;
            let (values, name) = match param {
                GridParam::Alpha => (cfg.experiment.alpha_grid.clone(), "alpha"),
                GridParam::Beta => (cfg.experiment.beta_grid.clone(), "beta"),
            };
            if values.is_empty() {
                return Err(Error::Config(format!("grid.{name} is empty")));
            }
            let result = grid_search(param, &cfg, &values)?;
            print!("{}", result.table.to_csv()?);
            let path = write_table(&result.table, &cfg.output.dir, &format!("grid-{name}.csv"))?;
            println!("best {name} = {}", result.best);
            eprintln!("wrote {}", path.display());
        }
        Command::Plot { input, out } => {
            let report = emit_plots(&input, &out)?;
            if report.skipped_lines > 0 {
                eprintln!("warning: skipped {} malformed metrics lines", report.skipped_lines);
            }
            for p in &report.written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
