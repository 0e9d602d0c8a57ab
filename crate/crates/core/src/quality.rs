//! Quality scores, position-bias curves and view estimates derived from a
//! fitted model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::estimator::{predict_rate, FitResult, Observation};
use crate::{ArticleId, Error, Mode, Result};

/// Adjacent view rates may rise by at most this fraction before the curve is
/// flagged as non-monotone.
pub const MONOTONE_SLACK: f64 = 0.05;

/// Log-quality gaps are snapped to multiples of this before exponentiating.
/// The grid is far coarser than the rounding noise of adding a constant to
/// every `q`, so shifted fits give bit-identical reports, and far finer than
/// any statistical precision.
pub const LOG_GAP_GRID: f64 = 1.0 / (1u64 << 28) as f64;

/// Share of up- and downvotes per article over all of its observations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VoteRatios {
    pub r_up: BTreeMap<ArticleId, f64>,
    pub r_down: BTreeMap<ArticleId, f64>,
}

impl VoteRatios {
    /// `r_up - r_down`, or `None` for an article without ratios.
    pub fn net(&self, article: &ArticleId) -> Option<f64> {
        Some(self.r_up.get(article)? - self.r_down.get(article)?)
    }
}

pub fn compute_vote_ratios(observations: &[Observation]) -> Result<VoteRatios> {
    let mut totals: BTreeMap<&ArticleId, (u64, u64)> = BTreeMap::new();
    for o in observations {
        let t = totals.entry(&o.article_id).or_default();
        t.0 += o.votes_up;
        t.1 += o.votes_down;
    }
    let mut ratios = VoteRatios::default();
    for (id, (up, down)) in totals {
        let total = up + down;
        if total == 0 {
            return Err(Error::Degenerate(format!("article {id} has no votes")));
        }
        let r_up = up as f64 / total as f64;
        ratios.r_up.insert(id.clone(), r_up);
        ratios.r_down.insert(id.clone(), down as f64 / total as f64);
    }
    Ok(ratios)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Normalized so the best article scores exactly 1. Reddit articles with
    /// more downvotes than upvotes come out at or below 0.
    pub quality: BTreeMap<ArticleId, f64>,
    /// Fraction of articles with strictly lower quality.
    pub quantile: BTreeMap<ArticleId, f64>,
    pub mode: Mode,
}

/// Quality `Q_i` for every fitted article.
///
/// HN: `exp(q_i) / max exp(q_j)`. Reddit additionally weighs each article by
/// its net vote share `r_up - r_down`. Exponentials are taken of the gap to
/// the largest `q`, snapped to [`LOG_GAP_GRID`], so shifting every `q` by a
/// constant changes nothing.
pub fn quality_scores(fit: &FitResult, ratios: Option<&VoteRatios>, mode: Mode) -> Result<QualityReport> {
    if fit.q.is_empty() {
        return Err(Error::Degenerate("fit has no articles".into()));
    }
    let q_max = fit.q.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut raw = BTreeMap::new();
    for (id, &q) in &fit.q {
        let weight = match mode {
            Mode::Hn => 1.0,
            Mode::Reddit => {
                let ratios = ratios.ok_or_else(|| {
                    Error::InvalidArgument("Reddit quality needs vote ratios".into())
                })?;
                ratios.net(id).ok_or_else(|| Error::UnknownArticle(id.clone()))?
            }
        };
        let gap = ((q - q_max) / LOG_GAP_GRID).round() * LOG_GAP_GRID;
        raw.insert(id.clone(), gap.exp() * weight);
    }
    let best = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return Err(Error::Degenerate(format!("largest raw quality is {best}")));
    }
    let quality: BTreeMap<ArticleId, f64> = raw.into_iter().map(|(k, v)| (k, v / best)).collect();

    let mut sorted: Vec<f64> = quality.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let quantile = quality
        .iter()
        .map(|(k, &v)| {
            let below = sorted.partition_point(|&x| x < v);
            (k.clone(), below as f64 / n)
        })
        .collect();
    Ok(QualityReport { quality, quantile, mode })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionBiasCurve {
    /// `(position, relative view rate)`, ascending by position, max exactly 1.
    pub points: Vec<(u32, f64)>,
    /// Set when the rate rises by more than [`MONOTONE_SLACK`] between two
    /// adjacent fitted positions.
    pub non_monotone: bool,
}

/// `exp(p_j)` scaled so the largest view rate is 1.
pub fn position_bias_curve(fit: &FitResult) -> PositionBiasCurve {
    let p_max = fit.p.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let points: Vec<(u32, f64)> = fit.p.iter().map(|(&pos, &p)| (pos, (p - p_max).exp())).collect();
    let non_monotone = points.windows(2).any(|w| w[1].1 > w[0].1 * (1.0 + MONOTONE_SLACK));
    PositionBiasCurve { points, non_monotone }
}

/// Estimated views over a trajectory: `sum exp(p)` at each occupied slot,
/// measured in units of views at the reference position.
pub fn total_views(fit: &FitResult, trajectory: &[u32]) -> Result<f64> {
    trajectory.iter().try_fold(0.0, |acc, pos| {
        let p = fit.position_effect(*pos)?;
        Ok(acc + p.exp())
    })
}

/// Per-article view estimates from the position each article held in every
/// observation.
pub fn view_estimates(fit: &FitResult, observations: &[Observation]) -> Result<BTreeMap<ArticleId, f64>> {
    let mut trajectories: BTreeMap<&ArticleId, Vec<(i64, u32)>> = BTreeMap::new();
    for o in observations.iter().filter(|o| fit.q.contains_key(&o.article_id)) {
        trajectories.entry(&o.article_id).or_default().push((o.bucket, o.position));
    }
    trajectories
        .into_iter()
        .map(|(id, mut t)| {
            t.sort_unstable();
            let positions: Vec<u32> = t.into_iter().map(|(_, p)| p).collect();
            Ok((id.clone(), total_views(fit, &positions)?))
        })
        .collect()
}

/// Predicted change in score over one bucket: predicted votes times the
/// article's net vote share. Without ratios (HN) this is just the vote rate.
pub fn predicted_score_growth(
    fit: &FitResult,
    ratios: Option<&VoteRatios>,
    article: &ArticleId,
    position: u32,
    age_hours: f64,
    displayed_score: i64,
) -> Result<f64> {
    let rate = predict_rate(fit, article, position, age_hours, displayed_score)?;
    match ratios {
        None => Ok(rate),
        Some(r) => {
            let net = r.net(article).ok_or_else(|| Error::UnknownArticle(article.clone()))?;
            Ok(rate * net)
        }
    }
}

/// `ln(score) / max ln(score)`. Scores must be at least 1; when every score
/// is 1 all outputs are 1.
pub fn normalized_log_score(final_scores: &BTreeMap<ArticleId, i64>) -> Result<BTreeMap<ArticleId, f64>> {
    if let Some((id, s)) = final_scores.iter().find(|(_, &s)| s < 1) {
        return Err(Error::InvalidArgument(format!("article {id} has score {s} < 1")));
    }
    let max_log = final_scores.values().map(|&s| (s as f64).ln()).fold(0.0f64, f64::max);
    Ok(final_scores
        .iter()
        .map(|(k, &s)| {
            let v = if max_log > 0.0 { (s as f64).ln() / max_log } else { 1.0 };
            (k.clone(), v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::estimator::ModelVariant;

    fn fit_with(q: &[(&str, f64)], p: &[(u32, f64)]) -> FitResult {
        FitResult {
            variant: ModelVariant::Base,
            reference_position: p.first().map(|x| x.0).unwrap_or(1),
            q: q.iter().map(|(k, v)| (ArticleId::from(*k), *v)).collect(),
            p: p.iter().copied().collect(),
            beta_age: 0.0,
            beta_score: 0.0,
            beta_social: 0.0,
            log_likelihood: 0.0,
            converged: true,
            iterations: 0,
            silent_positions: Vec::new(),
            diagnostics: Default::default(),
        }
    }

    fn ob(id: &str, bucket: i64, up: u64, down: u64) -> Observation {
        Observation {
            bucket,
            article_id: id.into(),
            position: 1,
            votes_up: up,
            votes_down: down,
            displayed_score: 1,
            age_hours: 0.0,
        }
    }

    #[test]
    fn vote_ratio_examples() {
        let r = compute_vote_ratios(&[ob("a", 0, 3, 0), ob("a", 1, 1, 0), ob("b", 0, 20, 4), ob("b", 1, 10, 6)])
            .unwrap();
        let a = ArticleId::from("a");
        let b = ArticleId::from("b");
        assert_eq!(r.r_up[&a], 1.0);
        assert_eq!(r.r_down[&a], 0.0);
        assert_eq!(r.r_up[&b], 0.75);
        assert!(compute_vote_ratios(&[ob("z", 0, 0, 0)]).is_err());
    }

    #[test]
    fn quality_examples() {
        let single = quality_scores(&fit_with(&[("a", -3.2)], &[(1, 0.0)]), None, Mode::Hn).unwrap();
        assert_eq!(single.quality[&ArticleId::from("a")], 1.0);
        assert_eq!(single.quantile[&ArticleId::from("a")], 0.0);

        let two = quality_scores(&fit_with(&[("a", 0.0), ("b", 2f64.ln())], &[(1, 0.0)]), None, Mode::Hn).unwrap();
        assert!((two.quality[&ArticleId::from("a")] - 0.5).abs() < LOG_GAP_GRID);
        assert_eq!(two.quality[&ArticleId::from("b")], 1.0);
        assert_eq!(two.quantile[&ArticleId::from("b")], 0.5);
    }

    #[test]
    fn reddit_quality_uses_net_share() {
        let fit = fit_with(&[("a", 0.3), ("b", 0.3)], &[(1, 0.0)]);
        let ratios = VoteRatios {
            r_up: [("a".into(), 0.75), ("b".into(), 0.5)].into_iter().collect(),
            r_down: [("a".into(), 0.25), ("b".into(), 0.5)].into_iter().collect(),
        };
        let rep = quality_scores(&fit, Some(&ratios), Mode::Reddit).unwrap();
        assert_eq!(rep.quality[&ArticleId::from("a")], 1.0);
        assert_eq!(rep.quality[&ArticleId::from("b")], 0.0);
        assert!(quality_scores(&fit, None, Mode::Reddit).is_err());
    }

    #[test]
    fn all_negative_reddit_quality_is_degenerate() {
        let fit = fit_with(&[("a", 0.3)], &[(1, 0.0)]);
        let ratios = VoteRatios {
            r_up: [("a".into(), 0.25)].into_iter().collect(),
            r_down: [("a".into(), 0.75)].into_iter().collect(),
        };
        assert!(matches!(quality_scores(&fit, Some(&ratios), Mode::Reddit), Err(Error::Degenerate(_))));
    }

    #[test]
    fn position_curve_examples() {
        let single = position_bias_curve(&fit_with(&[("a", 0.0)], &[(4, 0.0)]));
        assert_eq!(single.points, vec![(4, 1.0)]);
        assert!(!single.non_monotone);

        let two = position_bias_curve(&fit_with(&[("a", 0.0)], &[(1, 0.0), (2, -(2f64.ln()))]));
        assert_eq!(two.points[0], (1, 1.0));
        assert!((two.points[1].1 - 0.5).abs() < 1e-15);
        assert!(!two.non_monotone);

        // reference not at the top: normalization still hits 1 at the max
        let bumped = position_bias_curve(&fit_with(&[("a", 0.0)], &[(5, 0.0), (6, 0.2), (7, 0.0)]));
        assert_eq!(bumped.points[1].1, 1.0);
        assert!(bumped.non_monotone);

        let within_slack = position_bias_curve(&fit_with(&[("a", 0.0)], &[(1, 0.0), (2, 0.04)]));
        assert!(!within_slack.non_monotone);
    }

    #[test]
    fn total_view_examples() {
        let fit = fit_with(&[("a", 0.0)], &[(1, 0.0), (2, -(2f64.ln()))]);
        assert_eq!(total_views(&fit, &[1, 1]).unwrap(), 2.0);
        assert!((total_views(&fit, &[1, 2]).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(total_views(&fit, &[]).unwrap(), 0.0);
        assert!(matches!(total_views(&fit, &[3]), Err(Error::UnknownPosition(3))));
    }

    #[test]
    fn score_growth_examples() {
        let mut fit = fit_with(&[("a", 10f64.ln())], &[(1, 0.0)]);
        fit.variant = ModelVariant::Base;
        let a = ArticleId::from("a");
        let ratios = |up: f64| VoteRatios {
            r_up: [(a.clone(), up)].into_iter().collect(),
            r_down: [(a.clone(), 1.0 - up)].into_iter().collect(),
        };
        let g = predicted_score_growth(&fit, Some(&ratios(0.8)), &a, 1, 0.0, 1).unwrap();
        assert!((g - 6.0).abs() < 1e-12);
        assert_eq!(predicted_score_growth(&fit, Some(&ratios(0.5)), &a, 1, 0.0, 1).unwrap(), 0.0);
        let hn = predicted_score_growth(&fit, None, &a, 1, 0.0, 1).unwrap();
        assert!((hn - 10.0).abs() < 1e-12);
    }

    #[test]
    fn log_score_examples() {
        let scores: BTreeMap<ArticleId, i64> = [("a".into(), 10), ("b".into(), 100), ("c".into(), 1)].into();
        let n = normalized_log_score(&scores).unwrap();
        assert!((n[&ArticleId::from("a")] - 0.5).abs() < 1e-15);
        assert_eq!(n[&ArticleId::from("b")], 1.0);
        assert_eq!(n[&ArticleId::from("c")], 0.0);
        let single: BTreeMap<ArticleId, i64> = [("x".into(), 42)].into();
        assert_eq!(normalized_log_score(&single).unwrap()[&ArticleId::from("x")], 1.0);
        let bad: BTreeMap<ArticleId, i64> = [("x".into(), 0)].into();
        assert!(normalized_log_score(&bad).is_err());
    }

    proptest! {
        #[test]
        fn quantile_order_matches_quality(qs in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let named: Vec<(String, f64)> = qs.iter().enumerate().map(|(i, q)| (format!("a{i}"), *q)).collect();
            let refs: Vec<(&str, f64)> = named.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            let rep = quality_scores(&fit_with(&refs, &[(1, 0.0)]), None, Mode::Hn).unwrap();
            let max = rep.quality.values().copied().fold(f64::MIN, f64::max);
            prop_assert_eq!(max, 1.0);
            for (a, qa) in &rep.quality {
                for (b, qb) in &rep.quality {
                    if qa < qb {
                        prop_assert!(rep.quantile[a] < rep.quantile[b]);
                    }
                    if qa == qb {
                        prop_assert_eq!(rep.quantile[a], rep.quantile[b]);
                    }
                }
            }
        }

        #[test]
        fn curve_max_is_one(ps in prop::collection::vec(-6.0f64..2.0, 1..30)) {
            let p: Vec<(u32, f64)> = ps.iter().enumerate().map(|(i, v)| (i as u32 + 1, *v)).collect();
            let curve = position_bias_curve(&fit_with(&[("a", 0.0)], &p));
            let max = curve.points.iter().map(|x| x.1).fold(f64::MIN, f64::max);
            prop_assert_eq!(max, 1.0);
            prop_assert!(curve.points.iter().all(|x| x.1 > 0.0));
        }

        #[test]
        fn total_views_additive(a in prop::collection::vec(1u32..4, 0..20), b in prop::collection::vec(1u32..4, 0..20)) {
            let fit = fit_with(&[("a", 0.0)], &[(1, 0.0), (2, -0.4), (3, -1.3)]);
            let joined: Vec<u32> = a.iter().chain(&b).copied().collect();
            let lhs = total_views(&fit, &joined).unwrap();
            let rhs = total_views(&fit, &a).unwrap() + total_views(&fit, &b).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * lhs.max(1.0));
        }
    }
}
