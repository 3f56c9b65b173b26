//! Trajectory and ranking stability measures.
//!
//! `kendall_tau_paper` scores a chronological trajectory as
//! `4P / (n(n-1)) - 1`, where P counts pairs whose later score is strictly
//! higher. Ties and decreases both count against concordance, so a constant
//! series scores -1; that behavior is part of the measure and is not
//! "corrected" here. `kendall_tau_b` is the tie-adjusted diagnostic variant,
//! reported alongside but never substituted.

use crate::error::{Error, Result};

/// Chronological (step, score) series with strictly increasing steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySeries {
    points: Vec<(u64, f64)>,
}

impl TrajectorySeries {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints { got: points.len() });
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Domain(format!(
                    "steps must be strictly increasing, got {} then {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some((step, score)) = points.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Domain(format!(
                "score at step {step} is not finite: {score}"
            )));
        }
        Ok(TrajectorySeries { points })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Trajectory stability: `4P / (n(n-1)) - 1` with P = strictly-improving
/// pairs, enumerated exhaustively.
pub fn kendall_tau_paper(series: &TrajectorySeries) -> f64 {
    let pts = series.points();
    let n = pts.len();
    let mut improving = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if pts[j].1 > pts[i].1 {
                improving += 1;
            }
        }
    }
    4.0 * improving as f64 / (n as f64 * (n as f64 - 1.0)) - 1.0
}

/// Tie-adjusted tau-b over (step, score). Steps are strictly increasing, so
/// only score ties need correction. Undefined when every score is tied.
pub fn kendall_tau_b(series: &TrajectorySeries) -> Result<f64> {
    let pts = series.points();
    let n = pts.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut tied = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            if pts[j].1 > pts[i].1 {
                concordant += 1;
            } else if pts[j].1 < pts[i].1 {
                discordant += 1;
            } else {
                tied += 1;
            }
        }
    }
    let total = (n * (n - 1) / 2) as i64;
    if tied == total {
        return Err(Error::AllTied(n));
    }
    let denom = (total as f64) * ((total - tied) as f64);
    Ok((concordant - discordant) as f64 / denom.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub model_id: String,
    pub score_pt: f64,
    pub score_sft: f64,
}

/// Paired pre-training / post-SFT scores for M models. Ranks are always
/// derived internally from the raw scores so callers cannot disagree on
/// rank conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    entries: Vec<RankEntry>,
}

impl RankTable {
    pub fn new(entries: Vec<RankEntry>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::TooFewModels { got: entries.len() });
        }
        let mut ids: Vec<&str> = entries.iter().map(|e| e.model_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("model ids must be unique".into()));
        }
        if let Some(e) = entries
            .iter()
            .find(|e| !e.score_pt.is_finite() || !e.score_sft.is_finite())
        {
            return Err(Error::Domain(format!(
                "model {:?} has a non-finite score",
                e.model_id
            )));
        }
        Ok(RankTable { entries })
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Descending average (fractional) ranks: rank 1 is the best score, tied
/// scores share the mean of their positions.
pub fn average_ranks_desc(scores: &[f64]) -> Vec<f64> {
    let m = scores.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // positions i+1 ..= j+1
        for slot in &order[i..=j] {
            ranks[*slot] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrrBreakdown {
    pub models: usize,
    pub pairs: u64,
    pub reversals: u64,
    pub rate: f64,
}

/// Pairwise Ranking Reversal Rate: the fraction of model pairs whose relative
/// order strictly flips between the two stages. The indicator is strict, so a
/// tie in either stage never counts as a reversal.
pub fn prr_breakdown(table: &RankTable) -> PrrBreakdown {
    let pt_scores: Vec<f64> = table.entries.iter().map(|e| e.score_pt).collect();
    let sft_scores: Vec<f64> = table.entries.iter().map(|e| e.score_sft).collect();
    let pt = average_ranks_desc(&pt_scores);
    let sft = average_ranks_desc(&sft_scores);
    let m = table.entries.len();
    let mut reversals = 0u64;
    for i in 0..m {
        for j in i + 1..m {
            if (pt[i] - pt[j]) * (sft[i] - sft[j]) < 0.0 {
                reversals += 1;
            }
        }
    }
    let pairs = (m * (m - 1) / 2) as u64;
    PrrBreakdown {
        models: m,
        pairs,
        reversals,
        rate: reversals as f64 / pairs as f64,
    }
}

pub fn prr(table: &RankTable) -> f64 {
    prr_breakdown(table).rate
}
