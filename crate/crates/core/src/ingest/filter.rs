use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, FixedOffset, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use super::RawObservation;
use crate::estimator::Observation;
use crate::{ArticleId, Error, Mode, Result};

/// Upper end of the admissible position range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMax {
    Fixed(u32),
    /// Median of the articles' initial positions in the unfiltered input.
    MedianInitial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub window_start: NaiveTime,
    pub window_end: NaiveTime,
    pub weekdays_only: bool,
    /// Zone in which the clock window and weekdays are evaluated.
    pub utc_offset_minutes: i32,
    /// Whether to apply the position range at all; off for HN.
    pub position_filter: bool,
    pub p_min: u32,
    pub p_max: PMax,
    pub max_age_hours: f64,
    pub min_observations: usize,
    pub bucket_len_minutes: u32,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window_start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            window_end: NaiveTime::from_hms_opt(20, 0, 0).unwrap(),
            weekdays_only: true,
            utc_offset_minutes: -5 * 60,
            position_filter: true,
            p_min: 5,
            p_max: PMax::MedianInitial,
            max_age_hours: 12.0,
            min_observations: 5,
            bucket_len_minutes: 10,
        }
    }
}

impl FilterConfig {
    /// Defaults for a site: the position range only applies to Reddit.
    pub fn for_mode(mode: Mode) -> Self {
        Self { position_filter: mode == Mode::Reddit, ..Self::default() }
    }

    /// Keep everything: whole day, any weekday, any position and age.
    pub fn permissive() -> Self {
        Self {
            window_start: NaiveTime::MIN,
            window_end: NaiveTime::from_hms_opt(23, 59, 59).unwrap(),
            weekdays_only: false,
            position_filter: false,
            max_age_hours: f64::INFINITY,
            min_observations: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_start >= self.window_end {
            return Err(Error::InvalidConfig("window_start must precede window_end".into()));
        }
        if let PMax::Fixed(p) = self.p_max {
            if self.p_min >= p {
                return Err(Error::InvalidConfig(format!("p_min {} must be below p_max {p}", self.p_min)));
            }
        }
        if self.p_min == 0 {
            return Err(Error::InvalidConfig("p_min must be positive".into()));
        }
        if !(self.max_age_hours > 0.0) {
            return Err(Error::InvalidConfig("max_age_hours must be positive".into()));
        }
        if self.bucket_len_minutes == 0 {
            return Err(Error::InvalidConfig("bucket_len_minutes must be positive".into()));
        }
        FixedOffset::east_opt(self.utc_offset_minutes * 60)
            .ok_or_else(|| Error::InvalidConfig(format!("bad utc offset {}", self.utc_offset_minutes)))?;
        Ok(())
    }

    fn zone(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_minutes * 60).expect("validated")
    }

    fn in_window(&self, r: &RawObservation) -> bool {
        let local = r.timestamp.with_timezone(&self.zone());
        if self.weekdays_only && matches!(local.weekday(), Weekday::Sat | Weekday::Sun) {
            return false;
        }
        let t = local.time();
        self.window_start <= t && t <= self.window_end
    }
}

/// Records removed per rule; `unpaired` counts snapshots that yielded no
/// observation because the article had no snapshot in the next bucket.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub time_window: usize,
    pub position: usize,
    pub age: usize,
    pub min_observations: usize,
    pub unpaired: usize,
    /// p_max actually applied, when the position filter was on.
    pub resolved_p_max: Option<u32>,
}

impl ExclusionReport {
    pub fn total(&self) -> usize {
        self.time_window + self.position + self.age + self.min_observations + self.unpaired
    }
}

fn median_initial_position(raw: &[RawObservation]) -> Option<u32> {
    let mut first: BTreeMap<&ArticleId, &RawObservation> = BTreeMap::new();
    for r in raw {
        let e = first.entry(&r.article_id).or_insert(r);
        if r.timestamp < e.timestamp {
            *e = r;
        }
    }
    let mut positions: Vec<u32> = first.values().map(|r| r.position).collect();
    if positions.is_empty() {
        return None;
    }
    positions.sort_unstable();
    // lower median keeps the bound an integer position
    Some(positions[(positions.len() - 1) / 2])
}

/// Apply the record-level rules in order: clock window, position range, age,
/// then drop articles left with too few records. Filtering never fails.
///
/// Idempotent for a fixed `p_max`; with [`PMax::MedianInitial`] re-apply
/// with the reported `resolved_p_max` to get the same guarantee.
pub fn filter_raw(raw: &[RawObservation], cfg: &FilterConfig) -> (Vec<RawObservation>, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let p_max = match (cfg.position_filter, cfg.p_max) {
        (false, _) => None,
        (true, PMax::Fixed(p)) => Some(p),
        (true, PMax::MedianInitial) => Some(median_initial_position(raw).unwrap_or(u32::MAX)),
    };
    report.resolved_p_max = p_max;

    let mut kept = Vec::with_capacity(raw.len());
    for r in raw {
        if !cfg.in_window(r) {
            report.time_window += 1;
        } else if p_max.is_some_and(|hi| r.position < cfg.p_min || r.position > hi) {
            report.position += 1;
        } else if r.age_hours() > cfg.max_age_hours {
            report.age += 1;
        } else {
            kept.push(r);
        }
    }

    let mut counts: BTreeMap<&ArticleId, usize> = BTreeMap::new();
    for r in &kept {
        *counts.entry(&r.article_id).or_default() += 1;
    }
    let out: Vec<RawObservation> = kept
        .into_iter()
        .filter(|r| {
            let keep = counts[&r.article_id] >= cfg.min_observations;
            if !keep {
                report.min_observations += 1;
            }
            keep
        })
        .cloned()
        .collect();
    (out, report)
}

/// Difference each article's consecutive-bucket snapshots into observations.
///
/// Returns the observations and the number of snapshots that produced none
/// (last of a run, or a second snapshot within the same bucket). Tallies
/// that shrink between snapshots count as zero votes.
pub fn to_observations(raw: &[RawObservation], bucket_len_minutes: u32) -> (Vec<Observation>, usize) {
    let secs = 60 * bucket_len_minutes.max(1) as i64;
    let mut by_article: BTreeMap<&ArticleId, Vec<&RawObservation>> = BTreeMap::new();
    for r in raw {
        by_article.entry(&r.article_id).or_default().push(r);
    }
    let mut out = Vec::new();
    let mut unpaired = 0;
    for (id, mut snaps) in by_article {
        snaps.sort_by_key(|r| r.timestamp);
        let mut seen = BTreeSet::new();
        snaps.retain(|r| {
            let fresh = seen.insert(r.timestamp.timestamp().div_euclid(secs));
            if !fresh {
                unpaired += 1;
            }
            fresh
        });
        for (i, r) in snaps.iter().enumerate() {
            let bucket = r.timestamp.timestamp().div_euclid(secs);
            match snaps.get(i + 1) {
                Some(next) if next.timestamp.timestamp().div_euclid(secs) == bucket + 1 => {
                    out.push(Observation {
                        bucket,
                        article_id: id.clone(),
                        position: r.position,
                        votes_up: next.votes_up.saturating_sub(r.votes_up),
                        votes_down: next.votes_down.saturating_sub(r.votes_down),
                        displayed_score: r.displayed_score,
                        age_hours: r.age_hours(),
                    });
                }
                _ => unpaired += 1,
            }
        }
    }
    out.sort_by(|a, b| a.bucket.cmp(&b.bucket).then(a.position.cmp(&b.position)));
    (out, unpaired)
}

/// [`filter_raw`] followed by [`to_observations`]. The report's counts sum
/// to `raw.len() - observations.len()`.
pub fn apply_inclusion_filters(raw: &[RawObservation], cfg: &FilterConfig) -> (Vec<Observation>, ExclusionReport) {
    let (kept, mut report) = filter_raw(raw, cfg);
    let (obs, unpaired) = to_observations(&kept, cfg.bucket_len_minutes);
    report.unpaired = unpaired;
    (obs, report)
}
