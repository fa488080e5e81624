use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agrn::data;
use agrn::harness::{self, parse_model, DatasetKind, HarnessError, RunConfig, Scale};
use agrn::neuromod::{check_genome_shape, BaseOptimizer};

#[derive(Parser)]
#[command(name = "agrn", version, about = "Evolve and run GRN controllers for SGD and Adam")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a controller genome; writes best_genome.txt and history.csv.
    Evolve(RunArgs),
    /// Train the default optimizer, its tuned preset and the controller; writes compare.csv.
    Compare {
        genome: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Record every controller input and decision of one run; writes telemetry.csv.
    Trace {
        genome: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the effective configuration as TOML.
    PrintConfig(RunArgs),
    /// Check a genome file and report its shape.
    ValidateGenome {
        genome: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    base: Option<BaseOptimizer>,
    /// One model or a comma-separated list (m0,m1,m2).
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    scale: Option<Scale>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training samples kept (0 keeps all).
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            run.seed = v;
        }
        if let Some(v) = self.base {
            run.base = v;
        }
        if let Some(v) = &self.model {
            run.models = v
                .split(',')
                .map(|m| parse_model(m.trim()))
                .collect::<Result<_, _>>()
                .map_err(HarnessError::Config)?;
        }
        if let Some(v) = self.scale {
            run.scale = v;
        }
        if let Some(v) = self.epochs {
            run.epochs = v;
        }
        if let Some(v) = self.batch_size {
            run.batch_size = v;
        }
        if let Some(v) = &self.out {
            run.out = v.clone();
        }
        if let Some(v) = self.dataset {
            run.dataset = v;
        }
        if let Some(v) = &self.data_dir {
            run.data_dir = v.clone();
        }
        if let Some(v) = self.subset {
            run.subset = v;
        }
        if let Some(v) = self.population {
            run.population = v;
        }
        if let Some(v) = self.generations {
            run.generations = v;
        }
        run.check()?;
        Ok(run)
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Evolve(args) => {
            let run = args.resolve()?;
            let outcome = harness::cmd_evolve(&run)?;
            for r in &outcome.history.records {
                println!(
                    "gen {:>3}  model {}  best {:.4}  mean {:.4}  species {}",
                    r.generation, r.context, r.best_fitness, r.mean_fitness, r.species_count
                );
            }
            println!("best-ever fitness {:.4}", outcome.best.score());
            println!("wrote {}", run.out.join(harness::GENOME_FILE).display());
        }
        Command::Compare { genome, run } => {
            let run = run.resolve()?;
            for r in harness::cmd_compare(&run, &genome)? {
                println!(
                    "{:<8} epoch {:>3}  train {:.4}  test {:.4}",
                    r.method, r.epoch, r.train_accuracy, r.test_accuracy
                );
            }
        }
        Command::Trace { genome, run } => {
            let run = run.resolve()?;
            let rows = harness::cmd_trace(&run, &genome)?;
            println!("{} rows -> {}", rows.len(), run.out.join(harness::TELEMETRY_FILE).display());
        }
        Command::PrintConfig(args) => print!("{}", args.resolve()?.to_toml()),
        Command::ValidateGenome { genome, run } => {
            let run = run.resolve()?;
            let file = data::load_genome(&genome, &run.grn_config())?;
            let g = &file.genome;
            println!(
                "ok: base {}, {} inputs, {} outputs, {} regulators, beta {}, delta {}",
                file.base,
                g.n_inputs(),
                g.n_outputs(),
                g.n_regulators(),
                g.beta,
                g.delta
            );
            if let Err(e) = check_genome_shape(g, file.base) {
                println!("warning: {e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
