//! End-to-end clustering: normalise, learn deep features, choose the
//! cluster count by BIC, cluster with a Kohonen map and score the result.

use std::path::PathBuf;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{em_cluster, kmeans_best_of, KMEANS_MAX_ITER};
use crate::bic::{select_clusters_with, BicConfig, BicResult, CovarianceKind};
use crate::data::{self, normalize_minmax, Dataset};
use crate::drbm::{
    extract_features, train_drbm_with, DrbmModel, Propagation, DEFAULT_LAYERS, SINGLE_RBM_LAYERS,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, rank_methods, EvalReport, Mapping, RankTable};
use crate::kohonen::{
    assign_clusters, train_kohonen, KohonenNet, NeighborhoodDenom, Schedule, DEFAULT_ALPHA0,
    ITERATIONS_PER_SAMPLE,
};
use crate::rbm::CdTrainConfig;
use crate::seed;

/// Epochs used by the long-running preset.
pub const FULL_SCALE_EPOCHS: usize = 50_000;
pub const DEFAULT_EPOCHS: usize = 2000;
/// Restarts of the k-means baseline, best inertia kept.
pub const KMEANS_BASELINE_RESTARTS: usize = 10;

/// A clustering method in a comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kmeans,
    Em,
    /// Kohonen map on the normalised inputs.
    Som,
    /// The full pipeline with a single 50-unit RBM.
    SingleRbm,
    /// The full pipeline with the configured deep stack.
    Drbm,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Kmeans,
        Method::Em,
        Method::Som,
        Method::SingleRbm,
        Method::Drbm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Em => "em",
            Method::Som => "som",
            Method::SingleRbm => "single-rbm",
            Method::Drbm => "drbm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Everything a pipeline or comparison run needs. Every field has a
/// default, so a config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `iris`, `wine`, `moons`, `flame`, or a CSV path.
    pub dataset: String,
    /// Extra datasets for comparison tables; empty means just `dataset`.
    pub datasets: Vec<String>,
    pub has_header: bool,
    /// Zero-based label column of a CSV file; `None` for unlabelled data.
    pub label_column: Option<usize>,
    /// Samples per class of the generators; `None` uses 150 for moons and
    /// 300 for flame.
    pub n_per_class: Option<usize>,
    pub noise: f64,

    pub layers: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay_time: Option<f64>,
    pub batch_size: usize,
    pub propagation: Propagation,

    pub cmax: Option<usize>,
    pub gmm_restarts: usize,
    pub reg_scale: f64,
    pub covariance: CovarianceKind,

    pub alpha0: f64,
    /// Width reached by the neighbourhood at the last step; `None` decays
    /// to 1.
    pub final_sigma: Option<f64>,
    pub iterations_per_sample: usize,
    pub neighborhood_denom: NeighborhoodDenom,
    pub som_restarts: usize,

    pub seed: u64,
    pub runs: usize,
    pub mapping: Mapping,
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: "iris".into(),
            datasets: Vec::new(),
            has_header: true,
            label_column: None,
            n_per_class: None,
            noise: 0.05,
            layers: DEFAULT_LAYERS.to_vec(),
            epochs: DEFAULT_EPOCHS,
            lr: 0.1,
            lr_decay_time: None,
            batch_size: 10,
            propagation: Propagation::Resampled,
            cmax: None,
            gmm_restarts: 5,
            reg_scale: 0.05,
            covariance: CovarianceKind::Full,
            alpha0: DEFAULT_ALPHA0,
            final_sigma: Some(0.3),
            iterations_per_sample: ITERATIONS_PER_SAMPLE,
            neighborhood_denom: NeighborhoodDenom::SigmaSquared,
            som_restarts: 5,
            seed: 0,
            runs: 10,
            mapping: Mapping::Hungarian,
            methods: Method::ALL.to_vec(),
            out: None,
        }
    }
}

impl PipelineConfig {
    /// Parse a flat TOML table.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.layers.is_empty() || self.layers.contains(&0) {
            return bad("layers must be a non-empty list of positive sizes");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.cmax == Some(0) {
            return bad("cmax must be at least 1");
        }
        if self.gmm_restarts == 0 || self.som_restarts == 0 {
            return bad("restart counts must be at least 1");
        }
        if !(self.reg_scale >= 0.0 && self.reg_scale.is_finite()) {
            return bad("reg_scale must be >= 0");
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad("alpha0 must lie in (0, 1]");
        }
        if let Some(s) = self.final_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad("final_sigma must be positive");
            }
        }
        if self.iterations_per_sample == 0 {
            return bad("iterations_per_sample must be at least 1");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be >= 0");
        }
        Ok(())
    }

    /// Switch to the long-training preset.
    pub fn full_scale(mut self) -> Self {
        self.epochs = FULL_SCALE_EPOCHS;
        self
    }

    pub fn cd_config(&self, seed: u64, n_samples: usize) -> CdTrainConfig {
        CdTrainConfig {
            epochs: self.epochs,
            initial_lr: self.lr,
            lr_decay_time: self.lr_decay_time,
            batch_size: self.batch_size.min(n_samples.max(1)),
            seed,
        }
    }

    pub fn bic_config(&self, seed: u64) -> BicConfig {
        BicConfig {
            c_max: self.cmax,
            restarts: self.gmm_restarts,
            reg_scale: self.reg_scale,
            kind: self.covariance,
            seed,
        }
    }

    pub fn schedule(&self, n_o: usize, iterations: usize) -> Result<Schedule> {
        let mut s = match self.final_sigma {
            Some(f) => Schedule::with_final_sigma(n_o, iterations, f)?,
            None => Schedule::standard(n_o, iterations),
        };
        s.alpha0 = self.alpha0;
        s.denom = self.neighborhood_denom;
        Ok(s)
    }

    /// Datasets of a comparison run.
    pub fn dataset_list(&self) -> Vec<String> {
        if self.datasets.is_empty() {
            vec![self.dataset.clone()]
        } else {
            self.datasets.clone()
        }
    }

    /// Materialise `source`: a bundled table, a generator, or a CSV path.
    pub fn load_dataset(&self, source: &str) -> Result<Dataset> {
        let data_seed = seed::derive(self.seed, "data", 0);
        match source {
            "moons" => data::gen_moons(self.n_per_class.unwrap_or(150), self.noise, data_seed),
            "flame" => data::gen_flame(self.n_per_class.unwrap_or(300), data_seed),
            s if data::BUILTIN_DATASETS.contains(&s) => data::builtin(s),
            path => data::load_csv(path, self.has_header, self.csv_label_column(path)?),
        }
    }

    /// The configured label column, or the last column when the header
    /// names it `label`.
    fn csv_label_column(&self, path: &str) -> Result<Option<usize>> {
        if self.label_column.is_some() || !self.has_header {
            return Ok(self.label_column);
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let header = rdr.headers()?;
        Ok(match header.iter().last() {
            Some("label") => Some(header.len() - 1),
            _ => None,
        })
    }
}

/// Kohonen clustering with `n_o` neurons, keeping the restart with the
/// lowest quantisation error.
pub fn som_cluster(
    features: ArrayView2<'_, f64>,
    n_o: usize,
    cfg: &PipelineConfig,
    run_seed: u64,
) -> Result<(KohonenNet, Vec<usize>)> {
    let iterations = cfg.iterations_per_sample * features.nrows();
    let schedule = cfg.schedule(n_o, iterations)?;
    let mut best: Option<(f64, KohonenNet)> = None;
    for r in 0..cfg.som_restarts as u64 {
        let net = KohonenNet::new(
            features.ncols(),
            n_o,
            schedule,
            seed::derive(run_seed, "som-init", r),
        )?;
        let net = train_kohonen(net, features, iterations, seed::derive(run_seed, "som-train", r))?;
        let qe = net.quantization_error(features)?;
        if best.as_ref().is_none_or(|(b, _)| qe < *b) {
            best = Some((qe, net));
        }
    }
    let (_, net) = best.expect("som_restarts >= 1");
    let assignments = assign_clusters(&net, features)?;
    Ok((net, assignments))
}

/// Intermediate results of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub model: DrbmModel,
    pub features: Array2<f64>,
    pub bic: BicResult,
    pub net: KohonenNet,
    pub assignments: Vec<usize>,
}

/// Features, cluster count and clusters for already normalised data.
pub fn cluster_normalized(
    normalized: ArrayView2<'_, f64>,
    layers: &[usize],
    cfg: &PipelineConfig,
    run_seed: u64,
) -> Result<RunArtifacts> {
    let cd = cfg.cd_config(seed::derive(run_seed, "drbm", 0), normalized.nrows());
    let model = train_drbm_with(normalized, layers, &cd, cfg.propagation)?;
    let features = extract_features(&model, normalized)?;
    let bic = select_clusters_with(features.view(), &cfg.bic_config(seed::derive(run_seed, "bic", 0)))?;
    let (net, assignments) = som_cluster(features.view(), bic.selected, cfg, run_seed)?;
    Ok(RunArtifacts {
        model,
        features,
        bic,
        net,
        assignments,
    })
}

/// Seed of run `r`.
pub fn run_seed(base: u64, r: usize) -> u64 {
    seed::derive(base, "run", r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub n_clusters: usize,
    pub bic: BicResult,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunOutcome {
    Ok(RunReport),
    Failed { run: usize, seed: u64, error: String },
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub successful_runs: usize,
    pub failed_runs: usize,
    pub n_clusters: Summary,
    pub accuracy: Option<Summary>,
    pub nmi: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: Option<usize>,
    pub layers: Vec<usize>,
    pub runs: Vec<RunOutcome>,
    pub aggregate: Aggregate,
}

impl PipelineReport {
    pub fn any_failed(&self) -> bool {
        self.aggregate.failed_runs > 0
    }

    /// Assignments of every successful labelled run, by run index.
    pub fn assignments(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.runs.iter().filter_map(|r| match r {
            RunOutcome::Ok(rep) => rep.eval.as_ref().map(|e| (rep.run, e.assignments.as_slice())),
            RunOutcome::Failed { .. } => None,
        })
    }
}

fn aggregate(runs: &[RunOutcome]) -> Result<Aggregate> {
    let ok: Vec<&RunReport> = runs
        .iter()
        .filter_map(|r| match r {
            RunOutcome::Ok(rep) => Some(rep),
            RunOutcome::Failed { .. } => None,
        })
        .collect();
    let n_clusters: Vec<f64> = ok.iter().map(|r| r.n_clusters as f64).collect();
    let n_clusters = Summary::of(&n_clusters).ok_or_else(|| {
        let first = runs.iter().find_map(|r| match r {
            RunOutcome::Failed { error, .. } => Some(error.clone()),
            RunOutcome::Ok(_) => None,
        });
        Error::Numerical(format!(
            "every run failed; first error: {}",
            first.unwrap_or_default()
        ))
    })?;
    let acc: Vec<f64> = ok.iter().filter_map(|r| r.eval.as_ref().map(|e| e.accuracy)).collect();
    let nmi: Vec<f64> = ok.iter().filter_map(|r| r.eval.as_ref().map(|e| e.nmi)).collect();
    Ok(Aggregate {
        successful_runs: ok.len(),
        failed_runs: runs.len() - ok.len(),
        n_clusters,
        accuracy: Summary::of(&acc),
        nmi: Summary::of(&nmi),
    })
}

/// Run the full pipeline `cfg.runs` times on `cfg.dataset`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let ds = cfg.load_dataset(&cfg.dataset)?;
    run_pipeline_on(&ds, &cfg.dataset, &cfg.layers, cfg)
}

/// Run the pipeline with the given layer sizes on a loaded dataset.
pub fn run_pipeline_on(
    ds: &Dataset,
    name: &str,
    layers: &[usize],
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    let (norm, _) = normalize_minmax(ds);
    let runs: Vec<RunOutcome> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let s = run_seed(cfg.seed, r);
            let result = cluster_normalized(norm.samples(), layers, cfg, s).and_then(|art| {
                let eval = ds
                    .labels()
                    .map(|l| evaluate(&art.assignments, l, cfg.mapping))
                    .transpose()?;
                Ok(RunReport {
                    run: r,
                    seed: s,
                    n_clusters: art.net.n_outputs(),
                    bic: art.bic,
                    eval,
                })
            });
            match result {
                Ok(rep) => RunOutcome::Ok(rep),
                Err(e) => RunOutcome::Failed {
                    run: r,
                    seed: s,
                    error: e.to_string(),
                },
            }
        })
        .collect();
    let aggregate = aggregate(&runs)?;
    Ok(PipelineReport {
        dataset: name.to_string(),
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
        layers: layers.to_vec(),
        runs,
        aggregate,
    })
}

/// Accuracy of one method on one labelled dataset for one run.
pub fn method_accuracy(
    method: Method,
    ds: &Dataset,
    cfg: &PipelineConfig,
    run: usize,
) -> Result<f64> {
    let labels = ds
        .labels()
        .ok_or_else(|| Error::invalid("comparison needs labelled data"))?;
    let k = ds.n_classes().expect("labelled");
    let (norm, _) = normalize_minmax(ds);
    let x = norm.samples();
    let s = run_seed(cfg.seed, run);
    let assignments = match method {
        Method::Kmeans => {
            kmeans_best_of(x, k, seed::derive(s, "kmeans", 0), KMEANS_MAX_ITER, KMEANS_BASELINE_RESTARTS)?
                .assignments
        }
        Method::Em => em_cluster(x, k, seed::derive(s, "em", 0))?,
        Method::Som => som_cluster(x, k, cfg, s)?.1,
        Method::SingleRbm => cluster_normalized(x, &SINGLE_RBM_LAYERS, cfg, s)?.assignments,
        Method::Drbm => cluster_normalized(x, &cfg.layers, cfg, s)?.assignments,
    };
    Ok(evaluate(&assignments, labels, cfg.mapping)?.accuracy)
}

/// One `(dataset, method)` cell: summary over runs, or the error that
/// stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub accuracy: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub datasets: Vec<String>,
    pub methods: Vec<Method>,
    /// `cells[dataset][method]`.
    pub cells: Vec<Vec<ComparisonCell>>,
    pub ranks: RankTable,
}

impl ComparisonReport {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().flatten().any(|c| c.error.is_some())
    }
}

/// Every configured method on every configured dataset, ranked per
/// dataset by mean accuracy.
pub fn run_comparison(cfg: &PipelineConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let mut methods = cfg.methods.clone();
    methods.dedup();
    if methods.len() < 2 {
        return Err(Error::invalid("a comparison needs at least two methods"));
    }
    let datasets = cfg.dataset_list();
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..methods.len()).map(move |m| (d, m)))
        .collect();
    let loaded: Vec<Result<Dataset>> = datasets.iter().map(|d| cfg.load_dataset(d)).collect();
    let flat: Vec<ComparisonCell> = jobs
        .par_iter()
        .map(|&(d, m)| {
            let result = loaded[d].as_ref().map_err(|e| Error::invalid(e.to_string())).and_then(|ds| {
                let accs = (0..cfg.runs)
                    .map(|r| method_accuracy(methods[m], ds, cfg, r))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(Summary::of(&accs).expect("runs >= 1"))
            });
            match result {
                Ok(s) => ComparisonCell {
                    accuracy: Some(s),
                    error: None,
                },
                Err(e) => ComparisonCell {
                    accuracy: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let cells: Vec<Vec<ComparisonCell>> = flat
        .chunks(methods.len())
        .map(<[ComparisonCell]>::to_vec)
        .collect();
    let table: Vec<Vec<Option<f64>>> = cells
        .iter()
        .map(|row| row.iter().map(|c| c.accuracy.map(|s| s.mean)).collect())
        .collect();
    let ranks = rank_methods(&table)?;
    Ok(ComparisonReport {
        datasets,
        methods,
        cells,
        ranks,
    })
}
