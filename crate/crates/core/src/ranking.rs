//! Rank correlation between transferability scores and measured transfer
//! performance, and ranking of a model hub by score.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthDirection {
    #[default]
    HigherBetter,
    /// Errors such as MSE; the truths are negated before any comparison.
    LowerBetter,
}

impl std::str::FromStr for TruthDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher_better" | "higher-better" | "higher" => Ok(TruthDirection::HigherBetter),
            "lower_better" | "lower-better" | "lower" => Ok(TruthDirection::LowerBetter),
            other => Err(Error::invalid(format!("unknown truth direction '{other}'"))),
        }
    }
}

/// Scores `S` and ground truths `T` for the same `M` models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub scores: Vec<f64>,
    pub truths: Vec<f64>,
    #[serde(default)]
    pub direction: TruthDirection,
}

impl ScorePair {
    pub fn new(scores: Vec<f64>, truths: Vec<f64>, direction: TruthDirection) -> Result<Self> {
        if scores.len() != truths.len() {
            return Err(Error::DimensionMismatch {
                what: "truth count",
                expected: scores.len(),
                got: truths.len(),
            });
        }
        if scores.len() < 2 {
            return Err(Error::invalid("rank correlation needs at least two models"));
        }
        if scores.iter().chain(&truths).any(|v| !v.is_finite()) {
            return Err(Error::invalid("scores and truths must be finite"));
        }
        Ok(Self {
            scores,
            truths,
            direction,
        })
    }

    fn oriented_truths(&self) -> Vec<f64> {
        match self.direction {
            TruthDirection::HigherBetter => self.truths.clone(),
            TruthDirection::LowerBetter => self.truths.iter().map(|t| -t).collect(),
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    match a.partial_cmp(&b) {
        Some(Ordering::Greater) => 1.0,
        Some(Ordering::Less) => -1.0,
        _ => 0.0,
    }
}

/// Plain Kendall τ over all `M(M−1)/2` pairs; tied pairs contribute zero.
pub fn kendall_tau(pair: &ScorePair) -> f64 {
    let t = pair.oriented_truths();
    let s = &pair.scores;
    let m = s.len();
    let mut acc = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            acc += sign(t[i], t[j]) * sign(s[i], s[j]);
        }
    }
    2.0 * acc / (m * (m - 1)) as f64
}

/// Rank 0 for the largest key, ties broken by the secondary key and then by
/// the larger index first.
fn decreasing_ranks(primary: &[f64], secondary: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..primary.len()).collect();
    order.sort_by(|&a, &b| {
        primary[b]
            .total_cmp(&primary[a])
            .then(secondary[b].total_cmp(&secondary[a]))
            .then(b.cmp(&a))
    });
    let mut rank = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// One direction of the weighted statistic, with hyperbolic weights taken
/// from the decreasing order of `x`.
fn weighted_tau_ranked(x: &[f64], y: &[f64]) -> Result<f64> {
    let rank = decreasing_ranks(x, y);
    let w: Vec<f64> = rank.iter().map(|&r| 1.0 / (1.0 + r as f64)).collect();
    let m = x.len();
    let (mut total, mut tied_x, mut tied_y, mut tied_both, mut discordant) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        for j in i + 1..m {
            let wij = w[i] + w[j];
            total += wij;
            let sx = sign(x[i], x[j]);
            let sy = sign(y[i], y[j]);
            if sx == 0.0 {
                tied_x += wij;
            }
            if sy == 0.0 {
                tied_y += wij;
            }
            if sx == 0.0 && sy == 0.0 {
                tied_both += wij;
            }
            if sx * sy < 0.0 {
                discordant += wij;
            }
        }
    }
    let denom = ((total - tied_x) * (total - tied_y)).sqrt();
    if denom <= 0.0 || tied_x >= total || tied_y >= total {
        return Err(Error::invalid(
            "weighted tau is undefined when scores or truths are all equal",
        ));
    }
    let tau = (total - tied_x - tied_y + tied_both - 2.0 * discordant) / denom;
    Ok(tau.clamp(-1.0, 1.0))
}

/// Weighted τ_w with additive hyperbolic weights `1/(1+r_i) + 1/(1+r_j)`,
/// averaged over the rankings induced by the truths and by the scores.
///
/// Errors when either side is constant.
pub fn weighted_tau(pair: &ScorePair) -> Result<f64> {
    let t = pair.oriented_truths();
    let s = &pair.scores;
    let a = weighted_tau_ranked(&t, s)?;
    let b = weighted_tau_ranked(s, &t)?;
    Ok(0.5 * (a + b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub id: String,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub tau: f64,
    /// `None` when τ_w is undefined (constant scores or truths).
    pub tau_w: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Models by descending score, ties by ascending id.
    pub ordering: Vec<RankedModel>,
    pub direction: TruthDirection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Correlation>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl RankReport {
    pub fn ids(&self) -> Vec<&str> {
        self.ordering.iter().map(|m| m.id.as_str()).collect()
    }

    pub fn top_k_ids(&self, k: usize) -> Result<Vec<&str>> {
        select_top_k(self, k)
    }
}

/// Ranks `(id, score)` pairs. Correlations are computed only when every model
/// has a truth value and there are at least two models.
pub fn rank_hub(
    models: &[(String, f64)],
    truths: Option<&[f64]>,
    direction: TruthDirection,
) -> Result<RankReport> {
    if models.is_empty() {
        return Err(Error::invalid("no models to rank"));
    }
    let mut seen = HashSet::new();
    for (id, score) in models {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate model id '{id}'")));
        }
        if !score.is_finite() {
            return Err(Error::invalid(format!(
                "model '{id}' has a non-finite score"
            )));
        }
    }
    if let Some(t) = truths {
        if t.len() != models.len() {
            return Err(Error::DimensionMismatch {
                what: "truth count",
                expected: models.len(),
                got: t.len(),
            });
        }
    }

    let mut idx: Vec<usize> = (0..models.len()).collect();
    idx.sort_by(|&a, &b| {
        models[b]
            .1
            .total_cmp(&models[a].1)
            .then_with(|| models[a].0.cmp(&models[b].0))
    });
    let ordering = idx
        .iter()
        .enumerate()
        .map(|(r, &i)| RankedModel {
            rank: r + 1,
            id: models[i].0.clone(),
            score: models[i].1,
            truth: truths.map(|t| t[i]),
        })
        .collect();

    let mut warnings = Vec::new();
    let correlation = match truths {
        Some(t) if models.len() >= 2 => {
            let pair = ScorePair::new(models.iter().map(|m| m.1).collect(), t.to_vec(), direction)?;
            let tau = kendall_tau(&pair);
            let tau_w = match weighted_tau(&pair) {
                Ok(v) => Some(v),
                Err(e) => {
                    warnings.push(e.to_string());
                    None
                }
            };
            Some(Correlation { tau, tau_w })
        }
        _ => None,
    };
    Ok(RankReport {
        ordering,
        direction,
        correlation,
        warnings,
    })
}

/// The `k` highest-scoring ids; `k` larger than the hub returns every model.
pub fn select_top_k(report: &RankReport, k: usize) -> Result<Vec<&str>> {
    if k == 0 {
        return Err(Error::invalid("top-k needs k ≥ 1"));
    }
    Ok(report
        .ordering
        .iter()
        .take(k)
        .map(|m| m.id.as_str())
        .collect())
}
