//! Ranking formulas for the two aggregators and the ordering engine that
//! applies them.
//!
//! Timestamps are integer minutes on an arbitrary clock. Reddit ages are in
//! minutes and HN ages in hours, matching each site's own formula.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{ArticleId, Error, Result};

/// Minutes of age that cost one unit of Reddit hot score (12.5 hours).
pub const REDDIT_AGE_SCALE_MINUTES: f64 = 750.0;
pub const HN_VOTE_EXPONENT: f64 = 0.8;
pub const HN_GRAVITY: f64 = 1.8;
pub const HN_AGE_OFFSET_HOURS: f64 = 2.0;

/// Live tallies of one article.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleState {
    pub article_id: ArticleId,
    pub upvotes: u64,
    /// Always 0 on Hacker News.
    pub downvotes: u64,
    /// Submission time in minutes.
    pub submit_time: i64,
    /// HN moderation multiplier; must be positive.
    pub penalty: f64,
}

impl ArticleState {
    pub fn new(article_id: impl Into<ArticleId>, submit_time: i64) -> Self {
        Self {
            article_id: article_id.into(),
            upvotes: 0,
            downvotes: 0,
            submit_time,
            penalty: 1.0,
        }
    }

    pub fn score(&self) -> i64 {
        self.upvotes as i64 - self.downvotes as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankingMode {
    RedditHot,
    HnTop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRule {
    pub mode: RankingMode,
    /// Minimum HN top score to appear in the list; 0 ranks everything.
    #[serde(default)]
    pub hn_threshold: f64,
}

impl RankingRule {
    pub fn reddit() -> Self {
        Self { mode: RankingMode::RedditHot, hn_threshold: 0.0 }
    }

    pub fn hn(threshold: f64) -> Self {
        Self { mode: RankingMode::HnTop, hn_threshold: threshold }
    }
}

/// Reddit hot score `log(u - d) - age/750`.
///
/// When `u - d < 1` the log term is clamped to 0, so the score stays finite
/// and still decays linearly with age.
pub fn reddit_hot_score(upvotes: u64, downvotes: u64, age_minutes: f64) -> f64 {
    let net = upvotes as i64 - downvotes as i64;
    let log_term = if net >= 1 { (net as f64).ln() } else { 0.0 };
    log_term - age_minutes / REDDIT_AGE_SCALE_MINUTES
}

/// Hacker News top score `(u - 1)^0.8 / (age + 2)^1.8 * penalty`.
pub fn hn_top_score(upvotes: u64, age_hours: f64, penalty: f64) -> Result<f64> {
    if upvotes < 1 {
        return Err(Error::InvalidArgument(
            "an HN article carries at least its submitter's vote".into(),
        ));
    }
    if !(penalty > 0.0) {
        return Err(Error::InvalidArgument(format!("penalty must be positive, got {penalty}")));
    }
    if !(age_hours >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative age {age_hours}")));
    }
    let votes = (upvotes - 1) as f64;
    Ok(votes.powf(HN_VOTE_EXPONENT) / (age_hours + HN_AGE_OFFSET_HOURS).powf(HN_GRAVITY) * penalty)
}

/// Score of one article under `rule` at time `now` (minutes).
///
/// Articles with zero upvotes are scored as if they had the submitter's vote
/// in HN mode.
pub fn article_score(state: &ArticleState, rule: &RankingRule, now: i64) -> f64 {
    let age_minutes = (now - state.submit_time).max(0) as f64;
    match rule.mode {
        RankingMode::RedditHot => reddit_hot_score(state.upvotes, state.downvotes, age_minutes),
        RankingMode::HnTop => {
            let penalty = if state.penalty > 0.0 { state.penalty } else { 1.0 };
            hn_top_score(state.upvotes.max(1), age_minutes / 60.0, penalty)
                .expect("inputs clamped into the valid domain")
        }
    }
}

/// One entry of a ranking: the article and its 1-based position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub article_id: ArticleId,
    pub position: u32,
    pub score: f64,
}

/// Order articles by score, descending, with ties broken by earlier
/// submission and then by id. In HN mode, articles scoring below the
/// threshold are left out.
pub fn rank_articles(states: &[ArticleState], rule: &RankingRule, now: i64) -> Vec<Ranked> {
    let mut scored: Vec<(f64, &ArticleState)> = states
        .iter()
        .map(|s| (article_score(s, rule, now), s))
        .filter(|(score, _)| match rule.mode {
            RankingMode::HnTop => *score >= rule.hn_threshold,
            RankingMode::RedditHot => true,
        })
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.partial_cmp(sa)
            .unwrap_or(Ordering::Equal)
            .then(a.submit_time.cmp(&b.submit_time))
            .then_with(|| a.article_id.cmp(&b.article_id))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, s))| Ranked {
            article_id: s.article_id.clone(),
            position: i as u32 + 1,
            score,
        })
        .collect()
}
