//! Python bindings for `synsrl-core`: tag sets, span algebra, corpora,
//! training, constrained decoding and evaluation.

use std::collections::HashMap;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use synsrl_core::corpus::{
    draw_pool, generate_synthetic, parse_bracketed, parse_spans, read_corpus, sample_fraction, strip_noisy_parses,
    write_corpus, GenConfig, Split,
};
use synsrl_core::decode::{decode, parse_constraint_mode, ConstraintSet, DecodeOptions};
use synsrl_core::evalmetrics::{evaluate, format_disagreement_delta, format_f1_delta, Averaging, EvalSummary};
use synsrl_core::span_algebra::{self, extract_spans, ExtractMode, LabeledSpan, SpanSet};
use synsrl_core::tagger::{Checkpoint, EmissionMatrix};
use synsrl_core::train::{self, predict_with, prepare_corpus, Objective, TrainConfig, TrainReport};
use synsrl_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for synsrl_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_arg<T: std::str::FromStr<Err = Error>>(text: &str) -> PyResult<T> {
    text.parse().or_py()
}

type PySpan = (usize, usize, Option<String>);
type PyInstance = (Vec<String>, usize, Option<Vec<String>>, Option<String>);

fn span_tuple(s: &LabeledSpan) -> PySpan {
    (s.start, s.end, s.label.clone())
}

/// Tag inventory: `O`, then `B-r`/`I-r` per role. A role named `V` is the predicate role.
#[pyclass(name = "TagSet", module = "synsrl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTagSet {
    inner: span_algebra::TagSet,
}

#[pymethods]
impl PyTagSet {
    #[new]
    fn new(roles: Vec<String>) -> PyResult<Self> {
        Ok(PyTagSet {
            inner: span_algebra::TagSet::new(roles).or_py()?,
        })
    }

    #[getter]
    fn roles(&self) -> Vec<String> {
        self.inner.roles().to_vec()
    }

    /// Tag names in index order.
    #[getter]
    fn tags(&self) -> Vec<String> {
        (0..self.inner.len()).map(|i| self.inner.name(i)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("TagSet({:?})", self.inner.roles())
    }

    /// Labeled spans `(start, end, label)` of a tag sequence, inclusive bounds.
    #[pyo3(signature = (tags, strict = false))]
    fn spans(&self, tags: Vec<String>, strict: bool) -> PyResult<Vec<PySpan>> {
        let idx = self.inner.parse_tags(&tags).or_py()?;
        let mode = if strict { ExtractMode::Strict } else { ExtractMode::Lenient };
        Ok(extract_spans(&idx, &self.inner, mode).or_py()?.iter().map(span_tuple).collect())
    }
}

/// Unlabeled `(start, end)` constituents of a bracketed tree over `n` tokens.
#[pyfunction]
fn tree_spans(bracketed: &str, n: usize) -> PyResult<Vec<(usize, usize)>> {
    Ok(parse_spans(&parse_bracketed(bracketed, n).or_py()?).bounds())
}

fn srl_set(spans: Vec<(usize, usize, String)>) -> PyResult<SpanSet> {
    SpanSet::srl(spans.into_iter().map(|(s, e, l)| LabeledSpan::role(s, e, l)).collect()).or_py()
}

/// Share of counted SRL spans that are not parse constituents.
#[pyfunction]
fn disagreement_rate(spans: Vec<(usize, usize, String)>, parse: Vec<(usize, usize)>) -> PyResult<f64> {
    Ok(span_algebra::disagreement_rate(&srl_set(spans)?, &SpanSet::parse(parse)))
}

#[pyfunction]
fn inconsistency_score(d: f64) -> f64 {
    span_algebra::inconsistency_score(d)
}

#[pyfunction(name = "format_f1_delta")]
fn py_format_f1_delta(baseline: f64, value: f64) -> String {
    format_f1_delta(baseline, value)
}

#[pyfunction(name = "format_disagreement_delta")]
fn py_format_disagreement_delta(baseline: f64, value: f64) -> String {
    format_disagreement_delta(baseline, value)
}

/// Instances in the line-oriented corpus format.
#[pyclass(name = "Corpus", module = "synsrl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCorpus {
    inner: synsrl_core::corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    #[pyo3(signature = (path, split = "train"))]
    fn read(path: &str, split: &str) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: read_corpus(path, parse_arg(split)?).or_py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, split = "train"))]
    fn from_text(text: &str, split: &str) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: synsrl_core::corpus::Corpus::parse_str(text, parse_arg(split)?).or_py()?,
        })
    }

    /// Synthetic corpus with the given share of gold spans moved off the parse.
    #[staticmethod]
    #[pyo3(signature = (n, noise = 0.1, seed = 7, split = "train"))]
    fn synthetic(n: usize, noise: f64, seed: u64, split: &str) -> PyResult<Self> {
        let config = GenConfig {
            n_instances: n,
            noise_rate: noise,
            seed,
            ..GenConfig::default()
        };
        Ok(PyCorpus {
            inner: generate_synthetic(&config, parse_arg(split)?).or_py()?.corpus,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn tagset(&self) -> PyResult<PyTagSet> {
        Ok(PyTagSet {
            inner: self.inner.tagset().or_py()?,
        })
    }

    /// Copy with parses removed where gold spans disagree with them.
    fn strip_noisy_parses(&self) -> PyResult<Self> {
        let ts = self.inner.tagset().or_py()?;
        Ok(PyCorpus {
            inner: strip_noisy_parses(&self.inner, &ts).or_py()?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_corpus(&self.inner, path).or_py()
    }

    /// `(tokens, predicate, gold_tags, parse)` of instance `i`.
    fn instance(&self, i: usize) -> PyResult<PyInstance> {
        let inst = self
            .inner
            .instances
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("index {i} out of range")))?;
        Ok((inst.tokens.clone(), inst.predicate_index, inst.gold_tags.clone(), inst.parse.clone()))
    }
}

fn summary_dict(s: &EvalSummary) -> HashMap<String, f64> {
    let mut d = HashMap::from([
        ("f1".to_string(), s.f1),
        ("precision".to_string(), s.precision),
        ("recall".to_string(), s.recall),
        ("predicted".to_string(), s.predicted as f64),
        ("gold".to_string(), s.gold as f64),
        ("matched".to_string(), s.matched as f64),
    ]);
    if let Some(dis) = s.avg_disagreement {
        d.insert("disagreement".to_string(), dis);
    }
    d
}

fn report_dict(r: &TrainReport) -> HashMap<String, f64> {
    let mut d = summary_dict(&r.best_dev);
    d.insert("best_epoch".to_string(), r.best_epoch.map_or(-1.0, |e| e as f64));
    d.insert("epochs".to_string(), r.epochs.len() as f64);
    d
}

fn decode_options(
    decoder: &str,
    constraints: &str,
    syntax_mode: &str,
    tagset: &span_algebra::TagSet,
) -> PyResult<DecodeOptions> {
    let mode = parse_constraint_mode(syntax_mode).or_py()?;
    Ok(DecodeOptions {
        decoder: parse_arg(decoder)?,
        constraints: ConstraintSet::from_names(constraints, mode, tagset).or_py()?,
        ..DecodeOptions::default()
    })
}

/// A trained tagger with its tag set.
#[pyclass(name = "Model", module = "synsrl", frozen)]
struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    /// Trains one objective and returns `(model, report)`. Continue
    /// objectives need `start`; SI objectives draw their parse-only pool from
    /// `pool`, or from the unsampled rest of `train`.
    #[staticmethod]
    #[pyo3(signature = (
        train, dev, objective = "supervised", fraction = 1.0, seed = 1, start = None, pool = None,
        unlabeled_multiplier = 1, learning_rate = None, max_epochs = None, patience = None,
        alpha1 = None, alpha2 = None, beta = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        train: &PyCorpus,
        dev: &PyCorpus,
        objective: &str,
        fraction: f64,
        seed: u64,
        start: Option<&PyModel>,
        pool: Option<&PyCorpus>,
        unlabeled_multiplier: usize,
        learning_rate: Option<f64>,
        max_epochs: Option<usize>,
        patience: Option<usize>,
        alpha1: Option<f64>,
        alpha2: Option<f64>,
        beta: Option<f64>,
    ) -> PyResult<(PyModel, HashMap<String, f64>)> {
        let objective: Objective = parse_arg(objective)?;
        let mut config = TrainConfig::for_objective(objective);
        config.seed = seed;
        config.labeled_fraction = fraction;
        config.unlabeled_multiplier = unlabeled_multiplier;
        if let Some(v) = learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = max_epochs {
            config.max_epochs = v;
            config.patience = config.patience.min(v);
        }
        if let Some(v) = patience {
            config.patience = v;
        }
        if let Some(v) = alpha1 {
            config.weights.alpha1 = v;
        }
        if let Some(v) = alpha2 {
            config.weights.alpha2 = v;
        }
        if let Some(v) = beta {
            config.beta = v;
        }
        let tagset = train.inner.tagset().or_py()?;
        let sample = sample_fraction(&train.inner, fraction, seed).or_py()?;
        let start = match (objective.continues(), start) {
            (true, Some(m)) => Some(m.inner.params.clone()),
            (true, None) => return Err(PyValueError::new_err(format!("{objective} needs a start model"))),
            (false, _) => None,
        };
        let pool = objective.uses_pool().then(|| {
            let source = pool.map_or(&sample.remainder, |p| &p.inner);
            draw_pool(source, unlabeled_multiplier * sample.labeled.len(), seed)
        });
        let labeled = sample.labeled;
        let dev = &dev.inner;
        let result = py.detach(|| match objective {
            Objective::Supervised => train::train_supervised(&labeled, dev, &tagset, &config),
            Objective::JointScratch => train::train_joint_scratch(&labeled, dev, &tagset, &config),
            Objective::SiContinue => {
                train::train_si_continue(start.as_ref().unwrap(), pool.as_ref().unwrap(), dev, &tagset, &config)
            }
            Objective::JointSslContinue => train::train_joint_ssl(
                start.as_ref().unwrap(),
                &labeled,
                pool.as_ref().unwrap(),
                dev,
                &tagset,
                &config,
            ),
            Objective::SupervisedContinue => {
                train::train_supervised_continue(start.as_ref().unwrap(), &labeled, dev, &tagset, &config)
            }
        });
        let (params, report) = result.or_py()?;
        Ok((
            PyModel {
                inner: Checkpoint::new(params, tagset).or_py()?,
            },
            report_dict(&report),
        ))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: Checkpoint::load(path).or_py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).or_py()
    }

    #[getter]
    fn tagset(&self) -> PyTagSet {
        PyTagSet {
            inner: self.inner.tagset.clone(),
        }
    }

    /// Per-token log-probabilities over the tag set.
    fn emissions(&self, tokens: Vec<String>, predicate: usize) -> PyResult<Vec<Vec<f64>>> {
        let (em, _) = self.inner.params.forward_tokens(&tokens, predicate).or_py()?;
        Ok((0..em.n()).map(|i| em.row(i).to_vec()).collect())
    }

    /// Tags one sentence. `parse` is a bracketed tree; decoders that need it
    /// fall back to Viterbi-style decoding without one.
    #[pyo3(signature = (tokens, predicate, parse = None, decoder = "viterbi", constraints = "bio,syn", syntax_mode = "hard"))]
    fn decode(
        &self,
        tokens: Vec<String>,
        predicate: usize,
        parse: Option<&str>,
        decoder: &str,
        constraints: &str,
        syntax_mode: &str,
    ) -> PyResult<Vec<String>> {
        let ts = &self.inner.tagset;
        let options = decode_options(decoder, constraints, syntax_mode, ts)?;
        let parse = match parse {
            Some(p) => Some(parse_spans(&parse_bracketed(p, tokens.len()).or_py()?)),
            None => None,
        };
        let (em, _) = self.inner.params.forward_tokens(&tokens, predicate).or_py()?;
        let result = decode(&em, ts, parse.as_ref(), &options).or_py()?;
        Ok(ts.names(&result.tags))
    }

    /// Decodes a gold corpus and scores it: F1, precision, recall and,
    /// when parses exist, disagreement in percent.
    #[pyo3(signature = (corpus, decoder = "viterbi", constraints = "bio,syn", syntax_mode = "hard", averaging = "micro"))]
    fn evaluate(
        &self,
        py: Python<'_>,
        corpus: &PyCorpus,
        decoder: &str,
        constraints: &str,
        syntax_mode: &str,
        averaging: &str,
    ) -> PyResult<HashMap<String, f64>> {
        let ts = &self.inner.tagset;
        let options = decode_options(decoder, constraints, syntax_mode, ts)?;
        let averaging: Averaging = parse_arg(averaging)?;
        let prepared = prepare_corpus(&corpus.inner, ts).or_py()?;
        let golds: Vec<Vec<usize>> = prepared
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.gold
                    .clone()
                    .ok_or_else(|| PyValueError::new_err(format!("instance {i} has no gold tags")))
            })
            .collect::<PyResult<_>>()?;
        let parses: Vec<Option<SpanSet>> = prepared.iter().map(|p| p.parse.clone()).collect();
        let summary = py
            .detach(|| {
                let preds = predict_with(&self.inner.params, &prepared, ts, &options)?;
                evaluate(&preds, &golds, &parses, ts, averaging)
            })
            .or_py()?;
        Ok(summary_dict(&summary))
    }
}

/// Decodes raw log-probability rows without a model.
#[pyfunction]
#[pyo3(signature = (logprobs, tagset, parse = None, decoder = "viterbi", constraints = "bio,syn", syntax_mode = "hard"))]
fn decode_emissions(
    logprobs: Vec<Vec<f64>>,
    tagset: &PyTagSet,
    parse: Option<Vec<(usize, usize)>>,
    decoder: &str,
    constraints: &str,
    syntax_mode: &str,
) -> PyResult<Vec<String>> {
    let ts = &tagset.inner;
    let options = decode_options(decoder, constraints, syntax_mode, ts)?;
    let em = EmissionMatrix::from_rows(&logprobs).or_py()?;
    let parse = parse.map(SpanSet::parse);
    let result = decode(&em, ts, parse.as_ref(), &options).or_py()?;
    Ok(ts.names(&result.tags))
}

#[pymodule]
fn synsrl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTagSet>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tree_spans, m)?)?;
    m.add_function(wrap_pyfunction!(disagreement_rate, m)?)?;
    m.add_function(wrap_pyfunction!(inconsistency_score, m)?)?;
    m.add_function(wrap_pyfunction!(py_format_f1_delta, m)?)?;
    m.add_function(wrap_pyfunction!(py_format_disagreement_delta, m)?)?;
    m.add_function(wrap_pyfunction!(decode_emissions, m)?)?;
    m.add("SPLITS", [Split::Train, Split::Dev, Split::Test, Split::Unlabeled].map(|s| s.to_string()))?;
    Ok(())
}
