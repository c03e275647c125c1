use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clustnet::bic::select_clusters_with;
use clustnet::data::{self, normalize_minmax, Dataset, NormalizationParams};
use clustnet::drbm::{extract_features, train_drbm_with, DrbmModel};
use clustnet::eval::{evaluate, Mapping};
use clustnet::kohonen::NeighborhoodDenom;
use clustnet::pipeline::{run_comparison, run_pipeline, run_seed, PipelineConfig};
use clustnet::report;
use clustnet::seed;
use clustnet::{Error, Result};

/// Deep RBM features, BIC cluster counts and Kohonen clustering.
#[derive(Parser)]
#[command(name = "clustnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Train the deep RBM stack and export features.
    Train(CommonArgs),
    /// Choose the number of clusters by BIC.
    PredictK(PredictKArgs),
    /// Run the full clustering pipeline.
    Cluster(CommonArgs),
    /// Compare methods across datasets.
    Compare(CommonArgs),
    /// Score an assignment file against labels.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Moons,
    Flame,
}

#[derive(Clone, Copy, ValueEnum)]
enum MappingArg {
    Hungarian,
    Majority,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenomArg {
    SigmaSquared,
    Sigma,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: Generator,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `iris`, `wine`, `moons`, `flame` or a CSV path.
    #[arg(long)]
    dataset: Option<String>,
    /// Zero-based label column of a CSV dataset.
    #[arg(long)]
    label_column: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Hidden layer sizes, e.g. `50,50,10`.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    cmax: Option<usize>,
    #[arg(long, value_enum)]
    mapping: Option<MappingArg>,
    #[arg(long, value_enum)]
    neighborhood_denom: Option<DenomArg>,
    /// Long training preset.
    #[arg(long = "paper-scale")]
    full_scale: bool,
    /// Directory for reports, models and assignments.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of tables.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictKArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model from `train`; features are taken from it instead of the
    /// normalised inputs.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// CSV with columns `row_index,cluster_id`.
    #[arg(long)]
    assignments: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

impl CommonArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
            cfg.datasets.clear();
        }
        if self.label_column.is_some() {
            cfg.label_column = self.label_column;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(l) = &self.layers {
            cfg.layers = l.clone();
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if self.cmax.is_some() {
            cfg.cmax = self.cmax;
        }
        if let Some(m) = self.mapping {
            cfg.mapping = match m {
                MappingArg::Hungarian => Mapping::Hungarian,
                MappingArg::Majority => Mapping::Majority,
            };
        }
        if let Some(d) = self.neighborhood_denom {
            cfg.neighborhood_denom = match d {
                DenomArg::SigmaSquared => NeighborhoodDenom::SigmaSquared,
                DenomArg::Sigma => NeighborhoodDenom::Sigma,
            };
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &PipelineConfig) -> Result<Option<&Path>> {
    match cfg.out.as_deref() {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn emit<T: Serialize>(value: &T, text: String, json: bool, dir: Option<&Path>, stem: &str) -> Result<()> {
    let js = report::to_json(value)?;
    if let Some(dir) = dir {
        report::write_text(dir.join(format!("{stem}.json")), &js)?;
        report::write_text(dir.join(format!("{stem}.txt")), &text)?;
    }
    print!("{}", if json { js } else { text });
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let ds = match args.kind {
        Generator::Moons => data::gen_moons(args.n_per_class.unwrap_or(150), args.noise, args.seed)?,
        Generator::Flame => data::gen_flame(args.n_per_class.unwrap_or(300), args.seed)?,
    };
    match &args.out {
        Some(path) => ds.write_csv(path),
        None => ds.write_csv_to(std::io::stdout().lock()),
    }
}

#[derive(Serialize, serde::Deserialize)]
struct TrainedModel {
    dataset: String,
    seed: u64,
    normalization: NormalizationParams,
    model: DrbmModel,
}

fn train(args: &CommonArgs) -> Result<bool> {
    let cfg = args.config()?;
    let ds = cfg.load_dataset(&cfg.dataset)?;
    let (norm, params) = normalize_minmax(&ds);
    let s = seed::derive(run_seed(cfg.seed, 0), "drbm", 0);
    let cd = cfg.cd_config(s, ds.n_samples());
    let model = train_drbm_with(norm.samples(), &cfg.layers, &cd, cfg.propagation)?;
    let features = extract_features(&model, norm.samples())?;
    let trained = TrainedModel {
        dataset: cfg.dataset.clone(),
        seed: s,
        normalization: params,
        model,
    };
    let text = format!(
        "trained layers {:?} on {} ({} samples); features {}x{}\n",
        trained.model.layer_sizes(),
        cfg.dataset,
        ds.n_samples(),
        features.nrows(),
        features.ncols()
    );
    let dir = out_dir(&cfg)?;
    if let Some(dir) = dir {
        Dataset::new(features, ds.labels().map(<[usize]>::to_vec))?.write_csv(dir.join("features.csv"))?;
    }
    emit(&trained, text, args.json, dir, "model")?;
    Ok(true)
}

fn predict_k(args: &PredictKArgs) -> Result<bool> {
    let cfg = args.common.config()?;
    let ds = cfg.load_dataset(&cfg.dataset)?;
    let features = match &args.model {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let trained: TrainedModel = serde_json::from_str(&text)?;
            let x = trained.normalization.apply(ds.samples())?;
            extract_features(&trained.model, x.view())?
        }
        None => normalize_minmax(&ds).0.into_parts().0,
    };
    let bic = select_clusters_with(features.view(), &cfg.bic_config(seed::derive(run_seed(cfg.seed, 0), "bic", 0)))?;
    let text = report::bic_text(&bic);
    emit(&bic, text, args.common.json, out_dir(&cfg)?, "bic")?;
    Ok(true)
}

fn cluster(args: &CommonArgs) -> Result<bool> {
    let cfg = args.config()?;
    let rep = run_pipeline(&cfg)?;
    let dir = out_dir(&cfg)?;
    if let Some(dir) = dir {
        for (run, a) in rep.assignments() {
            report::write_text(dir.join(format!("assignments_run{run}.csv")), &report::assignments_csv(a))?;
        }
    }
    emit(&rep, report::pipeline_text(&rep), args.json, dir, "report")?;
    Ok(!rep.any_failed())
}

fn compare(args: &CommonArgs) -> Result<bool> {
    let cfg = args.config()?;
    let rep = run_comparison(&cfg)?;
    emit(&rep, report::comparison_text(&rep), args.json, out_dir(&cfg)?, "comparison")?;
    Ok(!rep.any_failed())
}

fn eval(args: &EvalArgs) -> Result<bool> {
    let cfg = args.common.config()?;
    let ds = cfg.load_dataset(&cfg.dataset)?;
    let labels = ds
        .labels()
        .ok_or_else(|| Error::Config(format!("dataset {} has no labels", cfg.dataset)))?;
    let assignments = report::load_assignments(&args.assignments)?;
    let ev = evaluate(&assignments, labels, cfg.mapping)?;
    let text = format!(
        "accuracy {:.4} (hungarian {:.4}, majority {:.4})\nnmi {:.4}\ncontingency (rows = clusters)\n{}",
        ev.accuracy,
        ev.hungarian_accuracy,
        ev.majority_accuracy,
        ev.nmi,
        ev.contingency.to_csv()
    );
    emit(&ev, text, args.common.json, out_dir(&cfg)?, "eval")?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a).map(|()| true),
        Command::Train(a) => train(a),
        Command::PredictK(a) => predict_k(a),
        Command::Cluster(a) => cluster(a),
        Command::Compare(a) => compare(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("clustnet: at least one run failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("clustnet: {e}");
            ExitCode::FAILURE
        }
    }
}
