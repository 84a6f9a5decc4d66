//! SGD training loops with dev-F1 early stopping.
//!
//! Five objectives share one loop:
//!
//! | objective             | labeled batch         | unlabeled batch | start from |
//! |-----------------------|-----------------------|-----------------|------------|
//! | `Supervised`          | NLL                   | none            | init       |
//! | `JointScratch`        | α1·NLL + α2·SI        | none            | init       |
//! | `SiContinue`          | none                  | α2·SI           | pretrained |
//! | `JointSslContinue`    | α1·NLL                | α2·SI           | pretrained |
//! | `SupervisedContinue`  | NLL                   | none            | pretrained |
//!
//! Per-instance losses are averaged within each batch; when a step pairs a
//! labeled and an unlabeled batch the two averages are summed. The
//! proximity term is applied as a proximal step after each gradient step.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, Instance};
use crate::decode::{decode, viterbi, ConstraintMode, ConstraintSet, DecodeOptions, DecoderKind};
use crate::error::{Error, Result};
use crate::evalmetrics::{evaluate, Averaging, EvalSummary};
use crate::objectives::{joint_loss, nll_loss, si_loss, JointWeights, SiCoefficient};
use crate::span_algebra::{disagreement_rate, extract_spans, ExtractMode, SpanSet, TagSet};
use crate::tagger::{init_params, ModelDims, ModelParams, ParamGradients, Sensitivity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    Supervised,
    JointScratch,
    SiContinue,
    JointSslContinue,
    SupervisedContinue,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Supervised,
        Objective::JointScratch,
        Objective::SiContinue,
        Objective::JointSslContinue,
        Objective::SupervisedContinue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Supervised => "supervised",
            Objective::JointScratch => "joint-scratch",
            Objective::SiContinue => "si-continue",
            Objective::JointSslContinue => "joint-ssl",
            Objective::SupervisedContinue => "supervised-continue",
        }
    }

    /// Whether the loop starts from a pretrained checkpoint.
    pub fn continues(self) -> bool {
        matches!(
            self,
            Objective::SiContinue | Objective::JointSslContinue | Objective::SupervisedContinue
        )
    }

    pub fn uses_pool(self) -> bool {
        matches!(self, Objective::SiContinue | Objective::JointSslContinue)
    }

    pub fn uses_labeled(self) -> bool {
        self != Objective::SiContinue
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Objective::ALL.iter().map(|o| o.name()).collect();
                Error::Argument(format!("unknown objective `{s}` ({})", names.join("|")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub weights: JointWeights,
    /// Proximity coefficient toward the pretrained parameters.
    pub beta: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of the training set used as labeled data (bookkeeping only).
    pub labeled_fraction: f64,
    /// Unlabeled pool size as a multiple of the labeled set size.
    pub unlabeled_multiplier: usize,
    pub si_coefficient: SiCoefficient,
    /// Produces ŷ for the SI term; A* runs with BIO plus hard syntactic constraints.
    pub si_decoder: DecoderKind,
    /// Rescales each step's gradient to at most this norm.
    pub clip_norm: Option<f64>,
    pub buckets: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl TrainConfig {
    /// Defaults for each objective: α = 0.5/0.5 and patience 20 from scratch;
    /// SI continuation at lr 0.01, α2 = 1, β = 0.005, patience 10; joint SSL
    /// at lr 0.05, α = 1/1, patience 10.
    pub fn for_objective(objective: Objective) -> Self {
        let base = TrainConfig {
            objective,
            weights: JointWeights {
                alpha1: 0.5,
                alpha2: 0.5,
            },
            beta: 0.0,
            learning_rate: 0.1,
            max_epochs: 150,
            patience: 20,
            batch_size: 8,
            seed: 1,
            labeled_fraction: 1.0,
            unlabeled_multiplier: 0,
            si_coefficient: SiCoefficient::Score,
            si_decoder: DecoderKind::Viterbi,
            clip_norm: Some(5.0),
            buckets: 1024,
            embed: 16,
            hidden: 16,
        };
        match objective {
            Objective::Supervised => TrainConfig {
                weights: JointWeights {
                    alpha1: 1.0,
                    alpha2: 0.0,
                },
                ..base
            },
            Objective::JointScratch => base,
            Objective::SiContinue => TrainConfig {
                weights: JointWeights {
                    alpha1: 0.0,
                    alpha2: 1.0,
                },
                beta: 0.005,
                learning_rate: 0.01,
                patience: 10,
                ..base
            },
            Objective::JointSslContinue => TrainConfig {
                weights: JointWeights {
                    alpha1: 1.0,
                    alpha2: 1.0,
                },
                learning_rate: 0.05,
                patience: 10,
                ..base
            },
            Objective::SupervisedContinue => TrainConfig {
                weights: JointWeights {
                    alpha1: 1.0,
                    alpha2: 0.0,
                },
                learning_rate: 0.05,
                patience: 10,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        JointWeights::new(self.weights.alpha1, self.weights.alpha2)?;
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Argument(format!("beta {} must be >= 0", self.beta)));
        }
        if self.beta > 0.0 && !self.objective.continues() {
            return Err(Error::Argument(format!(
                "beta needs a pretrained reference; objective `{}` trains from scratch",
                self.objective
            )));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::Argument(format!(
                "need 1 <= patience ({}) <= max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::Argument(format!("labeled fraction {} not in (0, 1]", self.labeled_fraction)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Argument(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dims(&self, tagset: &TagSet) -> Result<ModelDims> {
        ModelDims::new(self.buckets, self.embed, self.hidden, tagset.len())
    }
}

/// One epoch's losses (averaged per step) and dev scores.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub nll: f64,
    pub si: f64,
    pub prox: f64,
    pub dev_f1: f64,
    pub dev_disagreement: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    /// Nothing to train on; the starting parameters are returned.
    EmptyData,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max-epochs",
            StopReason::Patience => "patience",
            StopReason::EmptyData => "empty-data",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub objective: Objective,
    pub seed: u64,
    /// Dev scores of the starting parameters.
    pub initial_dev: EvalSummary,
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned parameters; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    /// Dev scores of the returned parameters.
    pub best_dev: EvalSummary,
    pub stop_reason: StopReason,
}

impl TrainReport {
    /// Line-oriented records: `#` header lines, then one TAB-separated line per epoch.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        let fmt_dis = |d: Option<f64>| d.map_or("-".to_string(), |d| format!("{d:.4}"));
        let _ = writeln!(out, "# objective={}", self.objective);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(
            out,
            "# initial_dev_f1={:.6}\tinitial_dev_disagreement={}",
            self.initial_dev.f1,
            fmt_dis(self.initial_dev.avg_disagreement)
        );
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{}\ttotal={:.6}\tnll={:.6}\tsi={:.6}\tprox={:.6}\tdev_f1={:.6}\tdev_disagreement={}",
                e.epoch,
                e.total,
                e.nll,
                e.si,
                e.prox,
                e.dev_f1,
                fmt_dis(e.dev_disagreement)
            );
        }
        let best = self.best_epoch.map_or("-".to_string(), |b| b.to_string());
        let _ = writeln!(
            out,
            "# best_epoch={best}\tbest_dev_f1={:.6}\tbest_dev_disagreement={}\tstop={}",
            self.best_dev.f1,
            fmt_dis(self.best_dev.avg_disagreement),
            self.stop_reason
        );
        out
    }
}

/// An instance with tags and parse resolved once.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub tokens: Vec<String>,
    pub predicate: usize,
    pub gold: Option<Vec<usize>>,
    pub parse: Option<SpanSet>,
}

impl Prepared {
    pub fn new(instance: &Instance, tagset: &TagSet) -> Result<Self> {
        let gold = match &instance.gold_tags {
            Some(tags) => Some(tagset.parse_tags(tags)?),
            None => None,
        };
        Ok(Prepared {
            tokens: instance.tokens.clone(),
            predicate: instance.predicate_index,
            gold,
            parse: instance.parse_spans()?,
        })
    }
}

fn prepare(corpus: &Corpus, tagset: &TagSet) -> Result<Vec<Prepared>> {
    corpus.iter().map(|i| Prepared::new(i, tagset)).collect()
}

fn prepare_labeled(corpus: &Corpus, tagset: &TagSet, what: &str) -> Result<Vec<Prepared>> {
    let out = prepare(corpus, tagset)?;
    if let Some(i) = out.iter().position(|p| p.gold.is_none()) {
        return Err(Error::Argument(format!("{what} instance {i} has no gold tags")));
    }
    Ok(out)
}

/// Pool instances must be parse-only.
fn prepare_pool(corpus: &Corpus, tagset: &TagSet) -> Result<Vec<Prepared>> {
    if let Some(i) = corpus.iter().position(|p| p.gold_tags.is_some()) {
        return Err(Error::Contract(format!("unlabeled pool instance {i} carries gold tags")));
    }
    prepare(corpus, tagset)
}

/// Viterbi predictions for every instance, in order.
pub fn predict(params: &ModelParams, instances: &[Prepared], tagset: &TagSet) -> Result<Vec<Vec<usize>>> {
    instances
        .par_iter()
        .map(|p| {
            let (em, _) = params.forward_tokens(&p.tokens, p.predicate)?;
            Ok(viterbi(&em, tagset, &ConstraintSet::bio())?.tags)
        })
        .collect()
}

/// Predictions under any decoder; instances keep their own parses.
pub fn predict_with(
    params: &ModelParams,
    instances: &[Prepared],
    tagset: &TagSet,
    options: &DecodeOptions,
) -> Result<Vec<Vec<usize>>> {
    instances
        .par_iter()
        .map(|p| {
            let (em, _) = params.forward_tokens(&p.tokens, p.predicate)?;
            Ok(decode(&em, tagset, p.parse.as_ref(), options)?.tags)
        })
        .collect()
}

/// Prepares every instance of a corpus, gold optional.
pub fn prepare_corpus(corpus: &Corpus, tagset: &TagSet) -> Result<Vec<Prepared>> {
    prepare(corpus, tagset)
}

/// Viterbi decode, span F1 and micro disagreement over a labeled corpus.
pub fn evaluate_params(params: &ModelParams, dev: &[Prepared], tagset: &TagSet) -> Result<EvalSummary> {
    let predictions = predict(params, dev, tagset)?;
    let golds: Vec<Vec<usize>> = dev
        .iter()
        .map(|p| p.gold.clone().ok_or_else(|| Error::Argument("dev instance without gold tags".into())))
        .collect::<Result<_>>()?;
    let parses: Vec<Option<SpanSet>> = dev.iter().map(|p| p.parse.clone()).collect();
    evaluate(&predictions, &golds, &parses, tagset, Averaging::Micro)
}

fn si_decode_options(kind: DecoderKind) -> DecodeOptions {
    let constraints = match kind {
        DecoderKind::Astar => ConstraintSet::bio().with_syntactic(ConstraintMode::Hard),
        _ => ConstraintSet::bio(),
    };
    DecodeOptions {
        decoder: kind,
        constraints,
        ..DecodeOptions::default()
    }
}

#[derive(Default)]
struct StepLoss {
    nll: f64,
    si: f64,
}

/// Adds the batch-averaged gradient of one batch into `grads`.
#[allow(clippy::too_many_arguments)]
fn accumulate_batch(
    params: &ModelParams,
    batch: &[&Prepared],
    tagset: &TagSet,
    nll_weight: f64,
    si_weight: f64,
    coefficient: SiCoefficient,
    decoder: &DecodeOptions,
    grads: &mut ParamGradients,
    loss: &mut StepLoss,
) -> Result<()> {
    if batch.is_empty() {
        return Ok(());
    }
    let scale = 1.0 / batch.len() as f64;
    for inst in batch {
        let (em, tape) = params.forward_tokens(&inst.tokens, inst.predicate)?;
        let mut sensitivity = Sensitivity::zeros(em.n(), em.num_tags());
        let gold = if nll_weight > 0.0 { inst.gold.as_deref() } else { None };
        let si_term = match (&inst.parse, si_weight > 0.0) {
            (Some(parse), true) => {
                let predicted = decode(&em, tagset, Some(parse), decoder)?.tags;
                let spans = extract_spans(&predicted, tagset, ExtractMode::Lenient)?;
                let s = coefficient.coefficient(disagreement_rate(&spans, parse));
                Some((predicted, s))
            }
            _ => None,
        };
        match (gold, &si_term) {
            (Some(gold), Some((predicted, s))) => {
                let weights = JointWeights::new(nll_weight, si_weight)?;
                let joint = joint_loss(&em, Some(gold), predicted, *s, weights)?;
                sensitivity = joint.sensitivity;
                let nll = nll_loss(&em, gold)?.scalar;
                loss.nll += scale * nll_weight * nll;
                loss.si += scale * (joint.scalar - nll_weight * nll);
            }
            (Some(gold), None) => {
                let nll = nll_loss(&em, gold)?;
                sensitivity.add_scaled(&nll.sensitivity, nll_weight);
                loss.nll += scale * nll_weight * nll.scalar;
            }
            (None, Some((predicted, s))) => {
                let si = si_loss(&em, predicted, *s)?;
                sensitivity.add_scaled(&si.sensitivity, si_weight);
                loss.si += scale * si_weight * si.scalar;
            }
            (None, None) => continue,
        }
        params.backward_into(&tape, &em, &sensitivity, scale, grads)?;
    }
    Ok(())
}

struct Loop<'a> {
    config: &'a TrainConfig,
    tagset: &'a TagSet,
    labeled: Vec<Prepared>,
    pool: Vec<Prepared>,
    dev: Vec<Prepared>,
    /// Weights applied to labeled instances: (nll, si).
    labeled_weights: (f64, f64),
    /// SI weight applied to pool instances.
    pool_weight: f64,
    reference: Option<ModelParams>,
}

const LABELED_STREAM: u64 = 0;
const POOL_STREAM: u64 = 1;

impl Loop<'_> {
    fn run(self, start: ModelParams) -> Result<(ModelParams, TrainReport)> {
        let config = self.config;
        let initial_dev = evaluate_params(&start, &self.dev, self.tagset)?;
        let mut report = TrainReport {
            objective: config.objective,
            seed: config.seed,
            initial_dev: initial_dev.clone(),
            epochs: Vec::new(),
            best_epoch: None,
            best_dev: initial_dev,
            stop_reason: StopReason::EmptyData,
        };
        let steps = if !self.labeled.is_empty() {
            self.labeled.len().div_ceil(config.batch_size)
        } else {
            self.pool.len().div_ceil(config.batch_size)
        };
        if steps == 0 {
            return Ok((start, report));
        }
        let pool_batch = self.pool.len().div_ceil(steps);

        let mut labeled_rng = ChaCha8Rng::seed_from_u64(config.seed);
        labeled_rng.set_stream(LABELED_STREAM);
        let mut pool_rng = ChaCha8Rng::seed_from_u64(config.seed);
        pool_rng.set_stream(POOL_STREAM);

        let mut params = start;
        let mut best_params = params.clone();
        let mut best_f1 = f64::NEG_INFINITY;
        let mut since_best = 0;
        let mut labeled_order: Vec<usize> = (0..self.labeled.len()).collect();
        let mut pool_order: Vec<usize> = (0..self.pool.len()).collect();
        let lr = config.learning_rate;
        let si_decoder = si_decode_options(config.si_decoder);

        for epoch in 1..=config.max_epochs {
            labeled_order.shuffle(&mut labeled_rng);
            pool_order.shuffle(&mut pool_rng);
            let (mut nll_sum, mut si_sum) = (0.0, 0.0);
            for step in 0..steps {
                let mut grads = ParamGradients::zeros(&params.dims);
                let mut loss = StepLoss::default();
                let lb = batch_of(&labeled_order, step, config.batch_size, &self.labeled);
                accumulate_batch(
                    &params,
                    &lb,
                    self.tagset,
                    self.labeled_weights.0,
                    self.labeled_weights.1,
                    config.si_coefficient,
                    &si_decoder,
                    &mut grads,
                    &mut loss,
                )?;
                let ub = batch_of(&pool_order, step, pool_batch, &self.pool);
                accumulate_batch(
                    &params,
                    &ub,
                    self.tagset,
                    0.0,
                    self.pool_weight,
                    config.si_coefficient,
                    &si_decoder,
                    &mut grads,
                    &mut loss,
                )?;
                nll_sum += loss.nll;
                si_sum += loss.si;
                if let Some(max) = config.clip_norm {
                    let norm = grads.values.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if norm > max {
                        grads.scale(max / norm);
                    }
                }
                for (w, g) in params.values.iter_mut().zip(&grads.values) {
                    *w -= lr * g;
                }
                if let (Some(reference), true) = (&self.reference, config.beta > 0.0) {
                    // Proximal step for β‖W − W_ref‖²: exact minimizer of the
                    // penalty plus the squared distance to the SGD iterate.
                    let shrink = 1.0 + 2.0 * lr * config.beta;
                    for (w, w0) in params.values.iter_mut().zip(&reference.values) {
                        *w = (*w + 2.0 * lr * config.beta * w0) / shrink;
                    }
                }
            }
            let prox = match (&self.reference, config.beta > 0.0) {
                (Some(reference), true) => config.beta * params.distance_sq(reference)?,
                _ => 0.0,
            };
            let dev = evaluate_params(&params, &self.dev, self.tagset)?;
            let (nll, si) = (nll_sum / steps as f64, si_sum / steps as f64);
            report.epochs.push(EpochRecord {
                epoch,
                total: nll + si + prox,
                nll,
                si,
                prox,
                dev_f1: dev.f1,
                dev_disagreement: dev.avg_disagreement,
            });
            if dev.f1 > best_f1 {
                best_f1 = dev.f1;
                best_params = params.clone();
                report.best_epoch = Some(epoch);
                report.best_dev = dev;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    report.stop_reason = StopReason::Patience;
                    return Ok((best_params, report));
                }
            }
            report.stop_reason = StopReason::MaxEpochs;
        }
        Ok((best_params, report))
    }
}

fn batch_of<'a>(order: &[usize], step: usize, size: usize, items: &'a [Prepared]) -> Vec<&'a Prepared> {
    let start = (step * size).min(order.len());
    let end = (start + size).min(order.len());
    order[start..end].iter().map(|&i| &items[i]).collect()
}

fn check_objective(config: &TrainConfig, expected: Objective) -> Result<()> {
    config.validate()?;
    if config.objective != expected {
        return Err(Error::Argument(format!(
            "config objective `{}` does not match `{expected}`",
            config.objective
        )));
    }
    Ok(())
}

fn check_pretrained(pretrained: &ModelParams, tagset: &TagSet) -> Result<()> {
    if pretrained.dims.num_tags != tagset.len() {
        return Err(Error::Argument(format!(
            "pretrained model has {} tags, the tag set has {}",
            pretrained.dims.num_tags,
            tagset.len()
        )));
    }
    Ok(())
}

/// Supervised baseline from freshly initialized parameters.
pub fn train_supervised(
    labeled: &Corpus,
    dev: &Corpus,
    tagset: &TagSet,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    check_objective(config, Objective::Supervised)?;
    let start = init_params(config.dims(tagset)?, config.seed);
    Loop {
        config,
        tagset,
        labeled: prepare_labeled(labeled, tagset, "labeled")?,
        pool: Vec::new(),
        dev: prepare_labeled(dev, tagset, "dev")?,
        labeled_weights: (1.0, 0.0),
        pool_weight: 0.0,
        reference: None,
    }
    .run(start)
}

/// Joint NLL + SI training from freshly initialized parameters. Instances
/// without a parse contribute only the NLL term.
pub fn train_joint_scratch(
    labeled: &Corpus,
    dev: &Corpus,
    tagset: &TagSet,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    check_objective(config, Objective::JointScratch)?;
    let start = init_params(config.dims(tagset)?, config.seed);
    Loop {
        config,
        tagset,
        labeled: prepare_labeled(labeled, tagset, "labeled")?,
        pool: Vec::new(),
        dev: prepare_labeled(dev, tagset, "dev")?,
        labeled_weights: (config.weights.alpha1, config.weights.alpha2),
        pool_weight: 0.0,
        reference: None,
    }
    .run(start)
}

/// SI-only continuation on a parse-only pool, held near `pretrained`.
pub fn train_si_continue(
    pretrained: &ModelParams,
    pool: &Corpus,
    dev: &Corpus,
    tagset: &TagSet,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    check_objective(config, Objective::SiContinue)?;
    check_pretrained(pretrained, tagset)?;
    Loop {
        config,
        tagset,
        labeled: Vec::new(),
        pool: prepare_pool(pool, tagset)?,
        dev: prepare_labeled(dev, tagset, "dev")?,
        labeled_weights: (0.0, 0.0),
        pool_weight: config.weights.alpha2,
        reference: Some(pretrained.clone()),
    }
    .run(pretrained.clone())
}

/// Continuation pairing labeled batches (NLL) with pool batches (SI).
pub fn train_joint_ssl(
    pretrained: &ModelParams,
    labeled: &Corpus,
    pool: &Corpus,
    dev: &Corpus,
    tagset: &TagSet,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    check_objective(config, Objective::JointSslContinue)?;
    check_pretrained(pretrained, tagset)?;
    Loop {
        config,
        tagset,
        labeled: prepare_labeled(labeled, tagset, "labeled")?,
        pool: prepare_pool(pool, tagset)?,
        dev: prepare_labeled(dev, tagset, "dev")?,
        labeled_weights: (config.weights.alpha1, 0.0),
        pool_weight: config.weights.alpha2,
        reference: Some(pretrained.clone()),
    }
    .run(pretrained.clone())
}

/// Supervised fine-tuning of a pretrained model; the control arm for SSL.
pub fn train_supervised_continue(
    pretrained: &ModelParams,
    labeled: &Corpus,
    dev: &Corpus,
    tagset: &TagSet,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    check_objective(config, Objective::SupervisedContinue)?;
    check_pretrained(pretrained, tagset)?;
    Loop {
        config,
        tagset,
        labeled: prepare_labeled(labeled, tagset, "labeled")?,
        pool: Vec::new(),
        dev: prepare_labeled(dev, tagset, "dev")?,
        labeled_weights: (1.0, 0.0),
        pool_weight: 0.0,
        reference: Some(pretrained.clone()),
    }
    .run(pretrained.clone())
}
