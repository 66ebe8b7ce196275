//! `cel`: class-based expansion learning experiments from the command line.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cel_core::confusion::{
    order_classes, read_embeddings_csv, read_report_csv, score_distance_from_embeddings,
    write_embeddings_csv, write_report_csv, ClassOrdering, ConfusionReport, Criterion,
};
use cel_core::dataset::write_dataset_csv;
use cel_core::harness::{
    compare, load_data, run_cel, run_normal, score_classes, write_ordering_csv, ExperimentConfig,
    ExperimentReport, OrderingMode,
};
use cel_core::scheduler::{build_schedule, predicted_cost};

#[derive(Parser)]
#[command(name = "cel", version, about = "Class-based expansion learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the configured dataset and write it as canonical CSV
    GenData(GenDataArgs),
    /// Train the scorer and export per-class confusion scores and embeddings
    Score(ScoreArgs),
    /// Produce the class ordering (from a scores file or the full pipeline)
    Order(OrderArgs),
    /// Print the stage table and predicted cost for the configured schedule
    Schedule(ScheduleArgs),
    /// Run the experiment (normal or CEL) and write reports
    Train(TrainArgs),
    /// Compare two experiment reports class by class
    Compare(CompareArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Distance,
    Entropy,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Distance => Criterion::Distance,
            CriterionArg::Entropy => Criterion::Entropy,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Confusion criterion (defaults to the config's ordering mode when it
    /// is a scored one, else distance)
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Run seed (defaults to the config's first seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Score pre-computed embeddings from a CSV instead of training a scorer
    /// (distance criterion only)
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct OrderArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Order a pre-computed scores CSV instead of running the pipeline
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override the number of stages
    #[arg(long)]
    k: Option<usize>,
    /// Override the epoch-reduction factor
    #[arg(long)]
    lambda: Option<f64>,
    /// Emit JSON instead of the aligned table
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Normal,
    Cel,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArgMode {
    Distance,
    Entropy,
    Natural,
    Random,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// normal: one full-pool stage; cel: K expansion stages
    #[arg(long, value_enum, default_value = "cel")]
    mode: ModeArg,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Override the ordering mode
    #[arg(long, value_enum)]
    order: Option<OrderArgMode>,
    /// Run a single seed instead of the config's list
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline report.json
    a: PathBuf,
    /// Candidate report.json
    b: PathBuf,
    /// Also write the comparison as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() {
    // die quietly on a closed pipe (e.g. `cel compare ... | head`)
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Score(args) => score(args),
        Command::Order(args) => order(args),
        Command::Schedule(args) => schedule(args),
        Command::Train(args) => train(args),
        Command::Compare(args) => run_compare(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let config = args.config.load()?;
    let ds = load_data(&config.data)?;
    fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("data.csv");
    write_dataset_csv(&path, &ds)?;
    println!(
        "wrote {} samples ({} classes, {} features) to {}",
        ds.len(),
        ds.num_classes(),
        ds.feature_dim(),
        path.display()
    );
    Ok(())
}

fn resolve_criterion(config: &ExperimentConfig, arg: Option<CriterionArg>) -> Criterion {
    match arg {
        Some(c) => c.into(),
        None => match config.ordering {
            OrderingMode::Entropy => Criterion::Entropy,
            _ => Criterion::Distance,
        },
    }
}

fn score(args: ScoreArgs) -> Result<()> {
    let config = args.config.load()?;
    let criterion = resolve_criterion(&config, args.criterion);
    fs::create_dir_all(&config.output_dir)?;
    let scores_path = config.output_dir.join("scores.csv");

    let report = match &args.embeddings {
        Some(path) => {
            if criterion != Criterion::Distance {
                bail!("entropy scores need probability vectors; --embeddings supports only the distance criterion");
            }
            let (labels, embeddings) = read_embeddings_csv(path)?;
            let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
            score_distance_from_embeddings(&embeddings, &labels, num_classes)?
        }
        None => {
            let seed = args.seed.unwrap_or(config.seeds[0]);
            let outcome = score_classes(&config, criterion, seed)?;
            write_embeddings_csv(
                config.output_dir.join("embeddings.csv"),
                outcome.batch.embeddings(),
                outcome.batch.labels(),
            )?;
            outcome.report
        }
    };
    write_report_csv(&scores_path, &report)?;
    println!("class scores ({:?}):", report.criterion);
    for (class, s) in report.scores.iter().enumerate() {
        println!("  {class:>4}  {s:.6}");
    }
    println!("wrote {}", scores_path.display());
    Ok(())
}

fn order(args: OrderArgs) -> Result<()> {
    let config = args.config.load()?;
    let criterion = resolve_criterion(&config, args.criterion);
    let (report, names): (ConfusionReport, Vec<String>) = match &args.scores {
        Some(path) => {
            let report = read_report_csv(path, criterion)?;
            let names = (0..report.scores.len()).map(|c| c.to_string()).collect();
            (report, names)
        }
        None => {
            let seed = args.seed.unwrap_or(config.seeds[0]);
            let outcome = score_classes(&config, criterion, seed)?;
            (outcome.report, outcome.label_names)
        }
    };
    let ordering = order_classes(&report)?;
    fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("ordering.csv");
    write_ordering_csv(&path, &ordering, &names)?;
    println!("class order (hardest first): {:?}", ordering.order);
    println!("wrote {}", path.display());
    Ok(())
}

fn schedule(args: ScheduleArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(k) = args.k {
        config.num_stages = k;
    }
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    config.validate()?;
    let ds = load_data(&config.data)?;
    let ordering = ClassOrdering::natural(ds.num_classes());
    let mut sched = build_schedule(
        &ordering,
        config.num_stages,
        config.final_epochs,
        config.lambda,
    )?;
    if let Some(overrides) = &config.stage_epochs {
        sched.override_stage_epochs(overrides.clone())?;
    }
    let cost = predicted_cost(config.num_stages, config.lambda)?;

    if args.json {
        let value = serde_json::json!({ "schedule": &sched, "predicted_cost": &cost });
        println!("{}", serde_json::to_string_pretty(&value)?);
        return Ok(());
    }

    // per-stage cost assumes equal class sizes: epochs * (classes / M) / E
    let m = ds.num_classes() as f64;
    let final_epochs = sched.final_epochs() as f64;
    println!("stage  classes_added  cumulative  epochs    cost");
    let mut prev = 0;
    let mut total = 0.0;
    for (i, &count) in sched.stage_class_counts.iter().enumerate() {
        let stage_cost = sched.stage_epochs[i] as f64 * (count as f64 / m) / final_epochs;
        total += stage_cost;
        println!(
            "{:>5}  {:>13}  {:>10}  {:>6}  {:>6.4}",
            i + 1,
            count - prev,
            count,
            sched.stage_epochs[i],
            stage_cost
        );
        prev = count;
    }
    println!("total: {total:.4} x normal");
    println!(
        "closed form: equal-epoch {:.4} x normal, reduced (lambda = {}) {:.4} x normal",
        cost.equal_epoch_cost, config.lambda, cost.reduced_cost
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(k) = args.k {
        config.num_stages = k;
    }
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    if let Some(order) = args.order {
        config.ordering = match order {
            OrderArgMode::Distance => OrderingMode::Distance,
            OrderArgMode::Entropy => OrderingMode::Entropy,
            OrderArgMode::Natural => OrderingMode::Natural,
            OrderArgMode::Random => OrderingMode::Random,
        };
    }
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }

    let report = match args.mode {
        ModeArg::Normal => run_normal(&config)?,
        ModeArg::Cel => run_cel(&config)?,
    };

    println!("seed   test_error  measured_cost");
    for seed_report in &report.per_seed {
        println!(
            "{:>5}  {:>9.4}%  {:>12.4}",
            seed_report.seed,
            100.0 * seed_report.overall_error,
            seed_report.measured_cost
        );
    }
    println!(
        "mean {:.4}% +- {:.4}%  (best {:.4}%, mean cost {:.4})",
        100.0 * report.aggregate.mean_overall_error,
        100.0 * report.aggregate.std_overall_error,
        100.0 * report.aggregate.best_overall_error,
        report.aggregate.mean_measured_cost
    );
    println!("artifacts in {}", config.output_dir.display());
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let a = ExperimentReport::load(&args.a)
        .with_context(|| format!("loading report {}", args.a.display()))?;
    let b = ExperimentReport::load(&args.b)
        .with_context(|| format!("loading report {}", args.b.display()))?;
    let cmp = compare(&a, &b)?;

    println!(
        "overall: A {:.4}%  B {:.4}%  delta {:+.4}pp (positive = B better)",
        100.0 * cmp.a_mean_overall_error,
        100.0 * cmp.b_mean_overall_error,
        100.0 * cmp.overall_delta
    );
    println!("class  name          A_error%   B_error%   delta_pp  preferred");
    for row in &cmp.per_class {
        println!(
            "{:>5}  {:<12}  {:>8.4}  {:>8.4}  {:>+8.4}  {}",
            row.class,
            row.name,
            100.0 * row.a_mean_error,
            100.0 * row.b_mean_error,
            100.0 * row.delta,
            if row.preferred_in_b { "*" } else { "" }
        );
    }
    if let Some(per_seed) = &cmp.per_seed_overall_delta {
        let improved = per_seed.iter().filter(|&&(_, d)| d > 0.0).count();
        println!(
            "per-seed: B improves on {improved}/{} seeds",
            per_seed.len()
        );
    }
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&cmp)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
