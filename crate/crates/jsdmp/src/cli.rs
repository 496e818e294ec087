//! Command-line front end: train, eval, ablate, gradcheck and synth.
//!
//! Standard output carries human-readable summaries; `--out` paths receive
//! machine-readable reports. Exit codes: 0 success, 1 run or verification
//! failure, 2 usage error. Library errors print one line with a greppable
//! prefix, `jsdmp-error[<code>]: <message>`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    load_dataset, resolve_masks, synthesize_graph, write_dataset, Dataset, Masks, SplitPolicy,
    SplitSource, SynthConfig, TrainBudget,
};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, DEFAULT_TOLERANCE};
use crate::layers::DivergenceMode;
use crate::models::{Ablation, DmpGcnModel, DmpPrgModel, Model};
use crate::rng::{seeded_rng, Domain};
use crate::training::{evaluate, train, TrainConfig, TrainReport};

#[derive(Parser)]
#[command(
    name = "jsdmp",
    version,
    about = "Divergence-weighted message passing for graph node classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset directory and report test metrics.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Train under all four ablation modes across several seeds.
    Ablate(AblateArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic dataset directory with controlled homophily.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Dmpgcn,
    Dmpprg,
    /// DMPGCN with unit edge weights: a plain GCN baseline.
    Gcn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Normalized,
    Literal,
}

impl From<ModeArg> for DivergenceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Normalized => DivergenceMode::Normalized,
            ModeArg::Literal => DivergenceMode::Literal,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    Full,
    ContextOnly,
    StructureOnly,
    None,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::ContextOnly => Ablation::ContextOnly,
            AblationArg::StructureOnly => Ablation::StructureOnly,
            AblationArg::None => Ablation::None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Planetoid,
    Fractional,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalSplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Clone)]
struct SplitFlags {
    /// Split policy when the dataset has no pinned splits.tsv.
    #[arg(long, value_enum, default_value_t = SplitArg::Planetoid)]
    split: SplitArg,
    /// Planetoid train budget as a total (spread evenly over classes).
    #[arg(long, conflicts_with = "train_per_class")]
    train_total: Option<usize>,
    /// Planetoid train budget per class.
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Planetoid validation node count.
    #[arg(long, default_value_t = 500)]
    val: usize,
    /// Planetoid test node count.
    #[arg(long, default_value_t = 1000)]
    test: usize,
}

impl SplitFlags {
    fn source(&self, ds: &Dataset) -> SplitSource {
        if ds.masks.is_some() {
            return SplitSource::Pinned;
        }
        SplitSource::Policy(match self.split {
            SplitArg::Fractional => SplitPolicy::Fractional,
            SplitArg::Planetoid => {
                let train = match (self.train_total, self.train_per_class) {
                    (_, Some(p)) => TrainBudget::PerClass(p),
                    (Some(t), None) => TrainBudget::Total(t),
                    (None, None) => TrainBudget::Total(140),
                };
                SplitPolicy::Planetoid {
                    train,
                    val: self.val,
                    test: self.test,
                }
            }
        })
    }
}

#[derive(Args, Clone)]
struct FitFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    /// Epochs without a validation improvement before stopping.
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    /// Hidden width; defaults to 32 for dmpgcn/gcn and 64 for dmpprg.
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (manifest.tsv, edges.tsv, features.tsv, labels.tsv).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Dmpgcn)]
    model: ModelArg,
    #[command(flatten)]
    fit: FitFlags,
    /// Propagation depth of dmpprg.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Normalized)]
    divergence_mode: ModeArg,
    /// Which edge-weight terms stay active; --model gcn forces none.
    #[arg(long, value_enum, default_value_t = AblationArg::Full)]
    ablation: AblationArg,
    #[command(flatten)]
    split: SplitFlags,
    /// Write the text report here and the JSON report to `<path>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the trained model here (sidecar manifest at `<path>.manifest`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalSplitArg::Test)]
    split: EvalSplitArg,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Seeds 0..k, each trained under all four ablation modes.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[command(flatten)]
    fit: FitFlags,
    #[command(flatten)]
    split: SplitFlags,
    /// Write the mode/mean/std table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Nodes in the random instance.
    #[arg(long, default_value_t = 5)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    features: usize,
    /// Probability that a drawn edge connects same-class nodes.
    #[arg(long, default_value_t = 0.8)]
    homophily: f64,
    #[arg(long, default_value_t = 10)]
    avg_degree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

/// Parses arguments from the process environment and runs the selected
/// subcommand, returning the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(&args).map(|_| 0),
        Command::Eval(args) => cmd_eval(&args).map(|_| 0),
        Command::Ablate(args) => cmd_ablate(&args).map(|_| 0),
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::Synth(args) => cmd_synth(&args).map(|_| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("jsdmp-error[{}]: {err}", err.code());
            1
        }
    }
}

fn build_model(
    arg: ModelArg,
    ds: &Dataset,
    hidden: Option<usize>,
    k: usize,
    ablation: Ablation,
    mode: DivergenceMode,
    seed: u64,
) -> Result<Model> {
    let mut rng = seeded_rng(seed, Domain::ModelInit);
    Ok(match arg {
        ModelArg::Dmpgcn | ModelArg::Gcn => {
            let ablation = if arg == ModelArg::Gcn {
                Ablation::None
            } else {
                ablation
            };
            Model::DmpGcn(DmpGcnModel::new(
                ds.num_nodes(),
                ds.num_features(),
                hidden.unwrap_or(32),
                ds.num_classes,
                ablation,
                mode,
                &mut rng,
            )?)
        }
        ModelArg::Dmpprg => Model::DmpPrg(DmpPrgModel::new(
            ds.num_nodes(),
            ds.num_features(),
            hidden.unwrap_or(64),
            ds.num_classes,
            k,
            ablation,
            mode,
            &mut rng,
        )?),
    })
}

fn describe_dataset(ds: &Dataset, masks: &Masks) {
    let (tr, va, te) = masks.counts();
    println!(
        "dataset {}: {} nodes, {} undirected edges ({} raw lines), {} features, {} classes",
        ds.name,
        ds.num_nodes(),
        ds.graph.num_undirected_edges(),
        ds.raw_edge_count,
        ds.num_features(),
        ds.num_classes
    );
    println!("splits: {tr} train / {va} val / {te} test");
}

fn fit_config(fit: &FitFlags) -> TrainConfig {
    TrainConfig {
        epochs: fit.epochs,
        patience: fit.patience,
        lr: fit.lr,
        weight_decay: fit.weight_decay,
        seed: fit.seed,
    }
}

fn write_reports(report: &TrainReport, out: &Path) -> Result<()> {
    fs::write(out, report.render_text())?;
    let mut json_path = out.as_os_str().to_owned();
    json_path.push(".json");
    fs::write(PathBuf::from(json_path), report.to_json())?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&args.dataset)?;
    let source = args.split.source(&ds);
    let masks = resolve_masks(&ds, source, args.fit.seed)?;
    describe_dataset(&ds, &masks);

    let mut model = build_model(
        args.model,
        &ds,
        args.fit.hidden,
        args.k,
        args.ablation.into(),
        args.divergence_mode.into(),
        args.fit.seed,
    )?;
    let cfg = fit_config(&args.fit);
    let report = train(&mut model, &ds, &masks, &cfg)?;
    println!(
        "trained {} ({} ablation) for {} epochs, best epoch {} with val ACC {:.4}",
        report.model, report.ablation, report.epochs_run, report.best_epoch, report.best_val_acc
    );
    println!(
        "test ACC {} NMI {} ({:.2}s)",
        report.test_acc, report.test_nmi, report.wall_clock_seconds
    );

    if let Some(out) = &args.out {
        write_reports(&report, out)?;
        println!(
            "report written to {} and {}.json",
            out.display(),
            out.display()
        );
    }
    if let Some(ckpt) = &args.checkpoint {
        save_checkpoint(ckpt, &model, args.fit.seed, &ds.name, source)?;
        println!("checkpoint written to {}", ckpt.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ds = load_dataset(&args.dataset)?;
    let (model, meta) = load_checkpoint(&args.checkpoint)?;
    if ds.num_nodes() != meta.nodes {
        return Err(Error::Validation(format!(
            "dataset has {} nodes, checkpoint x_base expects {}",
            ds.num_nodes(),
            meta.nodes
        )));
    }
    if ds.num_features() != meta.input_dim {
        return Err(Error::Validation(format!(
            "dataset has {} features, checkpoint w_f expects {}",
            ds.num_features(),
            meta.input_dim
        )));
    }
    if ds.num_classes != meta.num_classes {
        return Err(Error::Validation(format!(
            "dataset has {} classes, checkpoint output layer expects {}",
            ds.num_classes, meta.num_classes
        )));
    }
    let masks = resolve_masks(&ds, meta.split, meta.seed)?;
    let mask = match args.split {
        EvalSplitArg::Train => &masks.train,
        EvalSplitArg::Val => &masks.val,
        EvalSplitArg::Test => &masks.test,
    };
    let (acc, nmi) = evaluate(&model, &ds, mask)?;
    let split = match args.split {
        EvalSplitArg::Train => "train",
        EvalSplitArg::Val => "val",
        EvalSplitArg::Test => "test",
    };
    println!("split\t{split}");
    println!("acc\t{acc}");
    println!("nmi\t{nmi}");
    Ok(())
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let ds = load_dataset(&args.dataset)?;
    let mut table = String::from("mode\tmean_acc\tstd_acc\n");
    for ablation in Ablation::ALL {
        let mut accs = Vec::new();
        for seed in 0..args.seeds {
            let source = args.split.source(&ds);
            let masks = resolve_masks(&ds, source, seed)?;
            let mut model = build_model(
                ModelArg::Dmpgcn,
                &ds,
                args.fit.hidden,
                0,
                ablation,
                DivergenceMode::Normalized,
                seed,
            )?;
            let cfg = TrainConfig {
                seed,
                ..fit_config(&args.fit)
            };
            let report = train(&mut model, &ds, &masks, &cfg)?;
            accs.push(report.test_acc);
        }
        let (mean, std) = mean_and_std(&accs);
        println!(
            "{}: test ACC {:.4} +- {:.4} over {} seeds",
            ablation.as_str(),
            mean,
            std,
            args.seeds
        );
        table.push_str(&format!("{}\t{mean}\t{std}\n", ablation.as_str()));
    }
    if let Some(out) = &args.out {
        fs::write(out, table)?;
        println!("table written to {}", out.display());
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let reports = run_gradcheck(args.size, args.seed, DEFAULT_TOLERANCE)?;
    let mut all_ok = true;
    for report in &reports {
        print!("{}", report.render_text());
        all_ok &= report.passed();
    }
    Ok(if all_ok { 0 } else { 1 })
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        nodes: args.n,
        classes: args.classes,
        features: args.features,
        homophily: args.homophily,
        avg_degree: args.avg_degree,
    };
    let mut rng = seeded_rng(args.seed, Domain::Synthesis);
    let ds = synthesize_graph(&cfg, &mut rng)?;
    write_dataset(&ds, &args.out)?;
    println!(
        "wrote {} nodes, {} undirected edges, {} features, {} classes to {}",
        ds.num_nodes(),
        ds.graph.num_undirected_edges(),
        ds.num_features(),
        ds.num_classes,
        args.out.display()
    );
    println!(
        "requested homophily {}, measured {:.4}",
        args.homophily,
        ds.graph.edge_homophily(&ds.labels)
    );
    Ok(())
}
