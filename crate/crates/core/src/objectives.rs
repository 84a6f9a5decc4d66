//! Loss functions over emission matrices and parameter vectors.
//!
//! Every loss returns its value together with its sensitivity to the
//! log-probabilities (to be pushed through [`crate::tagger`]) and, for the
//! proximity term, its gradient with respect to the parameters directly.

use crate::error::{Error, Result};
use crate::span_algebra::inconsistency_score;
use crate::tagger::{check_same_layout, EmissionMatrix, ModelParams, Sensitivity};

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub scalar: f64,
    /// dLoss/dLogProb, shaped like the emissions.
    pub sensitivity: Sensitivity,
    /// dLoss/dParams for terms that act on parameters directly.
    pub param_gradient: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl JointWeights {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 >= 0.0 && alpha2 >= 0.0) || !alpha1.is_finite() || !alpha2.is_finite() {
            return Err(Error::Argument(format!("weights must be finite and nonnegative, got {alpha1}, {alpha2}")));
        }
        if alpha1 == 0.0 && alpha2 == 0.0 {
            return Err(Error::Argument("at least one of alpha1, alpha2 must be positive".into()));
        }
        Ok(JointWeights { alpha1, alpha2 })
    }
}

/// How the disagreement rate of a decode becomes the multiplier on its
/// log-likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SiCoefficient {
    /// s = 2d − 1.
    #[default]
    Score,
    /// −(1 − d): reinforce in proportion to agreement, never suppress.
    Agreement,
}

impl SiCoefficient {
    pub fn coefficient(self, d: f64) -> f64 {
        match self {
            SiCoefficient::Score => inconsistency_score(d),
            SiCoefficient::Agreement => d - 1.0,
        }
    }
}

impl std::str::FromStr for SiCoefficient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(SiCoefficient::Score),
            "agreement" => Ok(SiCoefficient::Agreement),
            other => Err(Error::Argument(format!("unknown SI coefficient `{other}` (score|agreement)"))),
        }
    }
}

impl std::fmt::Display for SiCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SiCoefficient::Score => "score",
            SiCoefficient::Agreement => "agreement",
        })
    }
}

fn check_tags(emissions: &EmissionMatrix, tags: &[usize], what: &str) -> Result<()> {
    if tags.len() != emissions.n() {
        return Err(Error::Argument(format!(
            "{what} has length {} but the sentence has {} tokens",
            tags.len(),
            emissions.n()
        )));
    }
    if let Some(&t) = tags.iter().find(|&&t| t >= emissions.num_tags()) {
        return Err(Error::Argument(format!("{what} contains tag index {t} outside the tag set")));
    }
    Ok(())
}

/// Weighted log-likelihood of a fixed tag sequence: `coef · Σ log p(tags_i)`.
fn weighted_sequence(emissions: &EmissionMatrix, tags: &[usize], coef: f64) -> LossValue {
    let mut sensitivity = Sensitivity::zeros(emissions.n(), emissions.num_tags());
    let mut total = 0.0;
    for (i, &t) in tags.iter().enumerate() {
        total += emissions.logprob(i, t);
        if coef != 0.0 {
            sensitivity.add(i, t, coef);
        }
    }
    LossValue {
        scalar: coef * total,
        sensitivity,
        param_gradient: None,
    }
}

/// −Σ log p(gold_i).
pub fn nll_loss(emissions: &EmissionMatrix, gold: &[usize]) -> Result<LossValue> {
    check_tags(emissions, gold, "gold tag sequence")?;
    Ok(weighted_sequence(emissions, gold, -1.0))
}

/// s · Σ log p(ŷ_i), with `s` and `ŷ` treated as constants.
pub fn si_loss(emissions: &EmissionMatrix, predicted: &[usize], s: f64) -> Result<LossValue> {
    check_tags(emissions, predicted, "predicted tag sequence")?;
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::Argument(format!("inconsistency score {s} outside [-1, 1]")));
    }
    Ok(weighted_sequence(emissions, predicted, s))
}

/// α1 · NLL + α2 · SI. Without gold tags α1 must be zero.
pub fn joint_loss(
    emissions: &EmissionMatrix,
    gold: Option<&[usize]>,
    predicted: &[usize],
    s: f64,
    weights: JointWeights,
) -> Result<LossValue> {
    let mut sensitivity = Sensitivity::zeros(emissions.n(), emissions.num_tags());
    let mut scalar = 0.0;
    match gold {
        Some(gold) => {
            let nll = nll_loss(emissions, gold)?;
            scalar += weights.alpha1 * nll.scalar;
            sensitivity.add_scaled(&nll.sensitivity, weights.alpha1);
        }
        None if weights.alpha1 > 0.0 => {
            return Err(Error::Argument("alpha1 > 0 requires gold tags".into()));
        }
        None => {}
    }
    let si = si_loss(emissions, predicted, s)?;
    scalar += weights.alpha2 * si.scalar;
    sensitivity.add_scaled(&si.sensitivity, weights.alpha2);
    Ok(LossValue {
        scalar,
        sensitivity,
        param_gradient: None,
    })
}

/// β‖W − W_ref‖² and its parameter gradient 2β(W − W_ref).
pub fn proximity_penalty(params: &ModelParams, reference: &ModelParams, beta: f64) -> Result<LossValue> {
    check_same_layout(params, reference)?;
    if !(beta >= 0.0) {
        return Err(Error::Argument(format!("beta must be nonnegative, got {beta}")));
    }
    let mut scalar = 0.0;
    let gradient = params
        .values
        .iter()
        .zip(&reference.values)
        .map(|(w, w0)| {
            let delta = w - w0;
            scalar += delta * delta;
            2.0 * beta * delta
        })
        .collect();
    Ok(LossValue {
        scalar: beta * scalar,
        sensitivity: Sensitivity::zeros(0, params.dims.num_tags),
        param_gradient: Some(gradient),
    })
}
