//! Training objectives.
//!
//! Pairwise losses compare a positive triple's score with one of its
//! corruptions; pointwise losses treat each score as a prediction for a
//! 0/1 label.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `max(0, margin - pos + neg)`
    #[default]
    Margin,
    /// `softplus(margin - pos + neg)`
    SoftMargin,
    /// Logistic cross-entropy on raw scores.
    Bce,
    /// `(score - label)^2`
    Mse,
}

impl LossKind {
    pub fn is_pairwise(self) -> bool {
        matches!(self, LossKind::Margin | LossKind::SoftMargin)
    }

    /// Loss and its derivatives w.r.t. the positive and negative score.
    #[inline]
    pub fn pair(self, pos: f64, neg: f64, margin: f64) -> (f64, f64, f64) {
        let x = margin - pos + neg;
        match self {
            LossKind::Margin => {
                if x > 0.0 {
                    (x, -1.0, 1.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            LossKind::SoftMargin => {
                let d = sigmoid(x);
                (softplus(x), -d, d)
            }
            _ => unreachable!("pointwise loss used pairwise"),
        }
    }

    /// Loss and its derivative w.r.t. the score.
    #[inline]
    pub fn point(self, score: f64, label: f64) -> (f64, f64) {
        match self {
            LossKind::Bce => (bce_logit_loss(score, label), sigmoid(score) - label),
            LossKind::Mse => (mse_loss(score, label), 2.0 * (score - label)),
            _ => unreachable!("pairwise loss used pointwise"),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "margin" => Ok(LossKind::Margin),
            "soft_margin" => Ok(LossKind::SoftMargin),
            "bce" => Ok(LossKind::Bce),
            "mse" => Ok(LossKind::Mse),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

/// `ln(1 + e^x)` without overflow or loss of precision at either tail.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn margin_ranking_loss(pos: f64, neg: f64, margin: f64) -> f64 {
    (margin - pos + neg).max(0.0)
}

pub fn soft_margin_loss(pos: f64, neg: f64, margin: f64) -> f64 {
    softplus(margin - pos + neg)
}

/// `-y ln sigma(s) - (1 - y) ln(1 - sigma(s)) = (1 - y) s + softplus(-s)`.
pub fn bce_logit_loss(score: f64, label: f64) -> f64 {
    (1.0 - label) * score + softplus(-score)
}

pub fn mse_loss(score: f64, target: f64) -> f64 {
    (score - target) * (score - target)
}
