use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::spearman;
use crate::estimator::Observation;
use crate::quality::QualityReport;
use crate::{ArticleId, Error, Result};

/// Which articles enter the initial-position cohort: those whose first
/// observation shows exactly `entry_score` (when set) at an age of at most
/// `max_entry_age_minutes`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortRule {
    pub entry_score: Option<i64>,
    pub max_entry_age_minutes: f64,
}

impl Default for CohortRule {
    fn default() -> Self {
        Self { entry_score: Some(3), max_entry_age_minutes: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageSummary {
    /// 1-based page of the entry position.
    pub page: u32,
    pub count: usize,
    pub median_final_score: f64,
    pub mean_final_score: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Score after the last observed bucket of each article: the displayed score
/// at its start plus the net votes during it.
pub fn final_scores_from_observations(observations: &[Observation]) -> BTreeMap<ArticleId, i64> {
    let mut last: BTreeMap<&ArticleId, &Observation> = BTreeMap::new();
    for o in observations {
        let e = last.entry(&o.article_id).or_insert(o);
        if o.bucket > e.bucket {
            *e = o;
        }
    }
    last.into_iter()
        .map(|(id, o)| (id.clone(), o.displayed_score + o.votes_up as i64 - o.votes_down as i64))
        .collect()
}

/// Group a cohort of articles by the page they first appeared on and
/// summarize their final scores per page.
pub fn initial_position_analysis(
    observations: &[Observation],
    final_scores: &BTreeMap<ArticleId, i64>,
    rule: &CohortRule,
    page_size: u32,
) -> Result<Vec<PageSummary>> {
    if page_size == 0 {
        return Err(Error::InvalidArgument("page size must be positive".into()));
    }
    let mut entry: BTreeMap<&ArticleId, &Observation> = BTreeMap::new();
    for o in observations {
        let e = entry.entry(&o.article_id).or_insert(o);
        if o.bucket < e.bucket {
            *e = o;
        }
    }
    let mut pages: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (id, o) in entry {
        if rule.entry_score.is_some_and(|s| s != o.displayed_score) {
            continue;
        }
        if o.age_hours * 60.0 > rule.max_entry_age_minutes + 1e-9 {
            continue;
        }
        let Some(&score) = final_scores.get(id) else {
            continue;
        };
        let page = o.position.div_ceil(page_size);
        pages.entry(page).or_default().push(score as f64);
    }
    if pages.is_empty() {
        return Err(Error::Degenerate("no article matches the cohort rule".into()));
    }
    Ok(pages
        .into_iter()
        .map(|(page, mut scores)| {
            scores.sort_by(f64::total_cmp);
            PageSummary {
                page,
                count: scores.len(),
                median_final_score: median(&scores),
                mean_final_score: scores.iter().sum::<f64>() / scores.len() as f64,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityPopularity {
    pub score_corr: f64,
    pub views_corr: f64,
    pub n: usize,
}

/// Spearman correlation of quality against final score and against
/// estimated views, over articles present in all three inputs.
pub fn quality_popularity_report(
    report: &QualityReport,
    final_scores: &BTreeMap<ArticleId, i64>,
    views: &BTreeMap<ArticleId, f64>,
) -> Result<QualityPopularity> {
    let mut q = Vec::new();
    let mut s = Vec::new();
    let mut v = Vec::new();
    for (id, &quality) in &report.quality {
        if let (Some(&score), Some(&view)) = (final_scores.get(id), views.get(id)) {
            q.push(quality);
            s.push(score as f64);
            v.push(view);
        }
    }
    if q.is_empty() {
        return Err(Error::Degenerate("no common articles".into()));
    }
    Ok(QualityPopularity { score_corr: spearman(&q, &s)?, views_corr: spearman(&q, &v)?, n: q.len() })
}

fn top_set(values: &BTreeMap<&ArticleId, f64>, count: usize) -> Vec<ArticleId> {
    let mut ranked: Vec<(&ArticleId, f64)> = values.iter().map(|(k, v)| (*k, *v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(count).map(|(k, _)| k.clone()).collect()
}

/// Share of the top `k_percent` articles by quality that are also in the top
/// `k_percent` by popularity. Ties are broken by article id.
pub fn topk_overlap(
    quality: &BTreeMap<ArticleId, f64>,
    popularity: &BTreeMap<ArticleId, f64>,
    k_percent: f64,
) -> Result<f64> {
    if !(k_percent > 0.0 && k_percent <= 1.0) {
        return Err(Error::InvalidArgument(format!("k_percent {k_percent} outside (0, 1]")));
    }
    let q: BTreeMap<&ArticleId, f64> =
        quality.iter().filter(|(k, _)| popularity.contains_key(*k)).map(|(k, v)| (k, *v)).collect();
    let p: BTreeMap<&ArticleId, f64> =
        popularity.iter().filter(|(k, _)| quality.contains_key(*k)).map(|(k, v)| (k, *v)).collect();
    if q.is_empty() {
        return Err(Error::Degenerate("no common articles".into()));
    }
    let count = ((k_percent * q.len() as f64 - 1e-9).ceil() as usize).clamp(1, q.len());
    let top_q = top_set(&q, count);
    let top_p = top_set(&p, count);
    let hits = top_q.iter().filter(|id| top_p.contains(id)).count();
    Ok(hits as f64 / count as f64)
}

/// Per-day `(g - mean) / (max - min)`. Each article must appear on one day
/// only.
pub fn normalized_growth_rate<D: Ord>(
    rates_by_day: &BTreeMap<D, BTreeMap<ArticleId, f64>>,
) -> Result<BTreeMap<ArticleId, f64>> {
    let mut out = BTreeMap::new();
    for rates in rates_by_day.values() {
        if rates.len() < 2 {
            return Err(Error::Degenerate("a day needs at least two articles".into()));
        }
        let mean = rates.values().sum::<f64>() / rates.len() as f64;
        let max = rates.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rates.values().copied().fold(f64::INFINITY, f64::min);
        let range = max - min;
        if !(range > 0.0) {
            return Err(Error::Degenerate("all growth rates on a day are equal".into()));
        }
        for (id, g) in rates {
            if out.insert(id.clone(), (g - mean) / range).is_some() {
                return Err(Error::InvalidArgument(format!("article {id} appears on two days")));
            }
        }
    }
    Ok(out)
}
