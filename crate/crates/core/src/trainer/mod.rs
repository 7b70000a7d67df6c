//! Shared-trunk multi-task training with pluggable gradient aggregation.
//!
//! Per batch, each task's gradient w.r.t. the shared trunk is computed
//! separately, the aggregator turns them into one direction, and Adam steps
//! the trunk along it. Each head is stepped with its own task gradient.

mod auc;
mod data;
mod net;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use auc::auc;
pub use data::{
    assign_splits, load_csv, read_csv, synth_dataset, Dataset, Split, SplitFractions, SynthSpec,
};
pub use net::{bce_with_logits, BatchGradients, Dense, MtlNetwork};

use crate::aggregate::{aggregate, MethodKind, MethodSpec, Tolerances};
use crate::deconflict::TaskGradients;
use crate::dense;
use crate::error::{Error, Result};
use crate::metrics::{Direction, MetricTable};
use crate::optim::{AdamHyper, AdamState};
use crate::reweight::RatioVariant;

/// Where training rows come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SynthSpec),
    Csv {
        path: PathBuf,
        feature_columns: Vec<String>,
        task_columns: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub method: MethodSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub adam: AdamHyper,
    pub data: DataSource,
    pub fractions: SplitFractions,
    pub standardize: bool,
    /// Train one network per task instead of one multi-task network.
    pub single_task: bool,
    /// Fail the run if an applied gradops update conflicts with a task gradient.
    pub check_invariants: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: MethodSpec::gradops(0.0),
            epochs: 20,
            batch_size: 256,
            seed: 0,
            hidden: vec![32, 32],
            adam: AdamHyper::default(),
            data: DataSource::Synthetic(SynthSpec::default()),
            fractions: SplitFractions::default(),
            standardize: true,
            single_task: false,
            check_invariants: false,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid(
                "hidden sizes must be non-empty and positive",
            ));
        }
        Ok(())
    }

    /// Label used for the metric-table row.
    pub fn label(&self) -> String {
        if self.single_task {
            "single-task".to_string()
        } else {
            self.method.label()
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let mut d = match &self.data {
            DataSource::Synthetic(spec) => synth_dataset(self.seed, spec, self.fractions)?,
            DataSource::Csv {
                path,
                feature_columns,
                task_columns,
            } => load_csv(
                path,
                feature_columns,
                task_columns,
                self.fractions,
                self.seed,
            )?,
        };
        if self.standardize {
            d.standardize();
        }
        Ok(d)
    }
}

/// Flat key-value form of [`RunConfig`], as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatRunConfig {
    pub method: String,
    pub alpha: f64,
    pub variant: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub source: String,
    pub synth_rows: usize,
    pub synth_features: usize,
    pub synth_tasks: usize,
    pub synth_conflict: f64,
    pub synth_noise: Vec<f64>,
    pub csv_path: Option<PathBuf>,
    pub feature_columns: Vec<String>,
    pub task_columns: Vec<String>,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub standardize: bool,
    pub single_task: bool,
    pub check_invariants: bool,
}

impl Default for FlatRunConfig {
    fn default() -> Self {
        let base = RunConfig::default();
        let synth = SynthSpec::default();
        Self {
            method: "gradops".into(),
            alpha: 0.0,
            variant: "identity".into(),
            epochs: base.epochs,
            batch_size: base.batch_size,
            seed: base.seed,
            hidden: base.hidden,
            lr: base.adam.lr,
            beta1: base.adam.beta1,
            beta2: base.adam.beta2,
            adam_eps: base.adam.epsilon,
            source: "synthetic".into(),
            synth_rows: synth.rows,
            synth_features: synth.features,
            synth_tasks: synth.tasks,
            synth_conflict: synth.conflict,
            synth_noise: synth.noise,
            csv_path: None,
            feature_columns: Vec::new(),
            task_columns: Vec::new(),
            train_fraction: base.fractions.train,
            validation_fraction: base.fractions.validation,
            test_fraction: base.fractions.test,
            standardize: base.standardize,
            single_task: false,
            check_invariants: false,
        }
    }
}

impl TryFrom<FlatRunConfig> for RunConfig {
    type Error = Error;

    fn try_from(f: FlatRunConfig) -> Result<Self> {
        let kind: MethodKind = f.method.parse()?;
        let variant: RatioVariant = f.variant.parse()?;
        let data = match f.source.as_str() {
            "synthetic" => DataSource::Synthetic(SynthSpec {
                rows: f.synth_rows,
                features: f.synth_features,
                tasks: f.synth_tasks,
                conflict: f.synth_conflict,
                noise: f.synth_noise,
            }),
            "csv" => DataSource::Csv {
                path: f
                    .csv_path
                    .ok_or_else(|| Error::invalid("source = \"csv\" requires csv_path"))?,
                feature_columns: f.feature_columns,
                task_columns: f.task_columns,
            },
            other => return Err(Error::invalid(format!("unknown source `{other}`"))),
        };
        let cfg = RunConfig {
            method: MethodSpec {
                kind,
                alpha: f.alpha,
                variant,
                seed: f.seed,
                tolerances: Tolerances::default(),
            },
            epochs: f.epochs,
            batch_size: f.batch_size,
            seed: f.seed,
            hidden: f.hidden,
            adam: AdamHyper {
                lr: f.lr,
                beta1: f.beta1,
                beta2: f.beta2,
                epsilon: f.adam_eps,
            },
            data,
            fractions: SplitFractions {
                train: f.train_fraction,
                validation: f.validation_fraction,
                test: f.test_fraction,
            },
            standardize: f.standardize,
            single_task: f.single_task,
            check_invariants: f.check_invariants,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: Vec<f64>,
    pub validation_auc: Vec<f64>,
    pub test_auc: Vec<f64>,
    /// Mean `r_i` over batches where reweighting ran (gradops only).
    pub mean_ratio: Option<Vec<f64>>,
    /// Mean `w_i` over the same batches.
    pub mean_weight: Option<Vec<f64>>,
    /// Fraction of batches where at least one task conflicted (gradops only).
    pub conflict_fraction: Option<f64>,
    pub fallback_batches: usize,
    /// Smallest cosine between an applied trunk update and a task gradient.
    pub min_alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub label: String,
    pub tasks: Vec<String>,
    pub config: RunConfig,
    pub epochs: Vec<EpochReport>,
    pub final_validation_auc: Vec<f64>,
    pub final_test_auc: Vec<f64>,
}

impl RunReport {
    /// One-row table of final test AUCs.
    pub fn metric_table(&self) -> Result<MetricTable> {
        MetricTable::new(
            vec![self.label.clone()],
            self.tasks.clone(),
            vec![Direction::Higher; self.tasks.len()],
            vec![self.final_test_auc.clone()],
        )
    }
}

fn split_auc(net: &MtlNetwork, data: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
    let scores: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| net.forward(&data.features[i]))
        .collect();
    (0..net.num_tasks())
        .map(|t| {
            let s: Vec<f64> = scores.iter().map(|z| z[t]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| data.labels[i][t] == 1.0).collect();
            auc(&s, &l)
        })
        .collect()
}

struct TaskStats {
    ratio_sum: Vec<f64>,
    weight_sum: Vec<f64>,
    reweighted: usize,
    conflicted: usize,
    fallbacks: usize,
    batches: usize,
    min_alignment: f64,
}

/// Trains one network on `data` and reports every epoch.
fn train_network(
    cfg: &RunConfig,
    data: &Dataset,
    seed: u64,
) -> Result<(MtlNetwork, Vec<EpochReport>)> {
    let t = data.num_tasks();
    let mut net = MtlNetwork::new(data.num_features(), &cfg.hidden, t, seed)?;
    let mut trunk = net.shared_params();
    let mut trunk_opt = AdamState::new(trunk.len(), cfg.adam)?;
    let mut heads: Vec<Vec<f64>> = (0..t).map(|i| net.head_params(i)).collect();
    let mut head_opts = (0..t)
        .map(|_| AdamState::new(net.num_head_params(), cfg.adam))
        .collect::<Result<Vec<_>>>()?;

    let train = data.indices(Split::Train);
    let validation = data.indices(Split::Validation);
    let test = data.indices(Split::Test);
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = train.clone();
    let mut reports = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = vec![0.0; t];
        let mut stats = TaskStats {
            ratio_sum: vec![0.0; t],
            weight_sum: vec![0.0; t],
            reweighted: 0,
            conflicted: 0,
            fallbacks: 0,
            batches: 0,
            min_alignment: 0.0,
        };
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| data.features[i].as_slice()).collect();
            let ys: Vec<&[f64]> = chunk.iter().map(|&i| data.labels[i].as_slice()).collect();
            let g = net.forward_backward(&xs, &ys)?;
            for (s, l) in loss_sum.iter_mut().zip(&g.losses) {
                *s += l * chunk.len() as f64;
            }
            let update = if t == 1 {
                g.shared[0].clone()
            } else {
                let grads = TaskGradients::new(g.shared.clone())?;
                let agg = aggregate(&cfg.method, &grads)?;
                let d = &agg.diagnostics;
                if cfg.method.kind == MethodKind::GradOps {
                    if d.conflicted.as_ref().is_some_and(|c| c.iter().any(|&x| x)) {
                        stats.conflicted += 1;
                    }
                    if d.fallback {
                        stats.fallbacks += 1;
                    }
                    if let Some(tw) = &d.tradeoff {
                        for i in 0..t {
                            stats.ratio_sum[i] += tw.ratios[i];
                            stats.weight_sum[i] += tw.weights[i];
                        }
                        stats.reweighted += 1;
                    }
                    if cfg.check_invariants {
                        let un = dense::norm(&agg.update);
                        for (i, gi) in grads.rows().iter().enumerate() {
                            let bound = -1e-6 * un * dense::norm(gi);
                            if d.dots[i] < bound {
                                return Err(Error::Invariant(format!(
                                    "epoch {epoch}: update conflicts with task {i} (dot {:e})",
                                    d.dots[i]
                                )));
                            }
                        }
                    }
                }
                stats.min_alignment = stats
                    .min_alignment
                    .min(crate::aggregate::worst_alignment(&agg.update, &grads));
                agg.update
            };
            stats.batches += 1;
            trunk_opt.step(&mut trunk, &update)?;
            net.set_shared_params(&trunk)?;
            for i in 0..t {
                head_opts[i].step(&mut heads[i], &g.heads[i])?;
                net.set_head_params(i, &heads[i])?;
            }
        }
        let is_gradops = cfg.method.kind == MethodKind::GradOps && t > 1;
        let mean = |v: &[f64]| -> Option<Vec<f64>> {
            (is_gradops && stats.reweighted > 0)
                .then(|| v.iter().map(|s| s / stats.reweighted as f64).collect())
        };
        reports.push(EpochReport {
            epoch,
            train_loss: loss_sum.iter().map(|s| s / train.len() as f64).collect(),
            validation_auc: split_auc(&net, data, &validation)?,
            test_auc: split_auc(&net, data, &test)?,
            mean_ratio: mean(&stats.ratio_sum),
            mean_weight: mean(&stats.weight_sum),
            conflict_fraction: is_gradops.then(|| stats.conflicted as f64 / stats.batches as f64),
            fallback_batches: stats.fallbacks,
            min_alignment: stats.min_alignment,
        });
    }
    Ok((net, reports))
}

/// Runs training as configured. Deterministic for a fixed config.
pub fn train_run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    train_on(cfg, &data)
}

/// [`train_run`] on an already loaded dataset.
pub fn train_on(cfg: &RunConfig, data: &Dataset) -> Result<RunReport> {
    cfg.validate()?;
    if !cfg.single_task && data.num_tasks() >= 2 {
        let (_, epochs) = train_network(cfg, data, cfg.seed)?;
        let last = epochs.last().expect("epochs >= 1");
        return Ok(RunReport {
            label: cfg.label(),
            tasks: data.task_names.clone(),
            final_validation_auc: last.validation_auc.clone(),
            final_test_auc: last.test_auc.clone(),
            config: cfg.clone(),
            epochs,
        });
    }

    // one network per task; epoch reports are stitched task by task
    let t = data.num_tasks();
    let mut per_task = Vec::with_capacity(t);
    for task in 0..t {
        let d = data.single_task(task)?;
        let (_, epochs) = train_network(cfg, &d, cfg.seed)?;
        per_task.push(epochs);
    }
    let epochs: Vec<EpochReport> = (0..cfg.epochs)
        .map(|e| EpochReport {
            epoch: e,
            train_loss: per_task.iter().map(|r| r[e].train_loss[0]).collect(),
            validation_auc: per_task.iter().map(|r| r[e].validation_auc[0]).collect(),
            test_auc: per_task.iter().map(|r| r[e].test_auc[0]).collect(),
            mean_ratio: None,
            mean_weight: None,
            conflict_fraction: None,
            fallback_batches: 0,
            min_alignment: 0.0,
        })
        .collect();
    let last = epochs.last().expect("epochs >= 1");
    Ok(RunReport {
        label: if t == 1 {
            cfg.label()
        } else {
            "single-task".to_string()
        },
        tasks: data.task_names.clone(),
        final_validation_auc: last.validation_auc.clone(),
        final_test_auc: last.test_auc.clone(),
        config: cfg.clone(),
        epochs,
    })
}
