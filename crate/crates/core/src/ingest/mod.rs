//! Observation files: parsing, inclusion filters and Reddit vote de-fuzzing.
//!
//! A raw record is one scrape of one article: its position and *cumulative*
//! tallies at time `t`. Per-bucket vote counts come from differencing an
//! article's snapshots in consecutive buckets.

mod defuzz;
mod filter;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Duration, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::estimator::Observation;
use crate::sim::ObservationLog;
use crate::{ArticleId, Error, Mode, Result};

pub use defuzz::{
    defuzz_exact, defuzz_regress, run_fuzz_benchmark, FuzzBenchmark, FuzzBenchmarkReport, FuzzFeatures,
    FuzzSample, KnnRegressor, Regressor,
};
pub use filter::{
    apply_inclusion_filters, filter_raw, to_observations, ExclusionReport, FilterConfig, PMax,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    #[serde(rename = "t")]
    pub timestamp: DateTime<FixedOffset>,
    #[serde(rename = "id")]
    pub article_id: ArticleId,
    #[serde(rename = "pos")]
    pub position: u32,
    #[serde(rename = "up")]
    pub votes_up: u64,
    #[serde(rename = "down")]
    pub votes_down: u64,
    #[serde(rename = "score")]
    pub displayed_score: i64,
    #[serde(rename = "submitted")]
    pub submit_time: DateTime<FixedOffset>,
}

impl RawObservation {
    pub fn age_hours(&self) -> f64 {
        (self.timestamp - self.submit_time).num_milliseconds() as f64 / 3_600_000.0
    }
}

/// Read JSONL records. Blank lines are skipped; errors carry 1-based line
/// numbers.
pub fn parse_observations<R: BufRead>(reader: R, mode: Mode) -> Result<Vec<RawObservation>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let rec: RawObservation = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.position == 0 {
            return Err(parse_err("positions are 1-based".into()));
        }
        if rec.timestamp < rec.submit_time {
            return Err(parse_err("observed before submission".into()));
        }
        if mode == Mode::Hn && rec.votes_down > 0 {
            return Err(parse_err("HN records cannot have downvotes".into()));
        }
        if !seen.insert((rec.timestamp, rec.article_id.clone())) {
            return Err(parse_err(format!("duplicate record for {} at {}", rec.article_id, rec.timestamp)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_observations<W: Write>(mut writer: W, records: &[RawObservation]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Monday 2014-05-26 06:00 EST: the default origin for simulated clocks.
pub fn default_base_time() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2014-05-26T06:00:00-05:00").expect("valid literal")
}

/// Express a simulated log as scraped snapshots starting at `base`.
///
/// Each observation becomes one snapshot taken at the start of its bucket.
/// Tallies between consecutive buckets follow the recorded votes exactly;
/// across a gap (the article was off the list) only the score is known, so
/// the net change is booked to upvotes or downvotes by sign. An article's
/// final bucket has no successor snapshot and so does not survive a round
/// trip through [`to_observations`].
pub fn log_to_raw(log: &ObservationLog, base: DateTime<FixedOffset>) -> Vec<RawObservation> {
    let bucket_len = Duration::minutes(log.bucket_len_minutes as i64);
    let mut by_article: BTreeMap<&ArticleId, Vec<&Observation>> = BTreeMap::new();
    for o in &log.observations {
        by_article.entry(&o.article_id).or_default().push(o);
    }
    let mut out = Vec::with_capacity(log.observations.len());
    for (id, mut obs) in by_article {
        obs.sort_by_key(|o| o.bucket);
        let submitted = match log.submit_minutes.get(id) {
            Some(&m) => base + Duration::minutes(m),
            None => base + bucket_len * obs[0].bucket as i32 - Duration::seconds((obs[0].age_hours * 3600.0).round() as i64),
        };
        let first = obs[0].displayed_score;
        let (mut up, mut down) = (first.max(0) as u64, (-first).max(0) as u64);
        let mut prev: Option<&Observation> = None;
        for o in obs {
            if let Some(p) = prev {
                if o.bucket == p.bucket + 1 {
                    up += p.votes_up;
                    down += p.votes_down;
                } else {
                    let net = o.displayed_score - (up as i64 - down as i64);
                    if net >= 0 {
                        up += net as u64;
                    } else {
                        down += (-net) as u64;
                    }
                }
            }
            out.push(RawObservation {
                timestamp: base + bucket_len * o.bucket as i32,
                article_id: id.clone(),
                position: o.position,
                votes_up: up,
                votes_down: down,
                displayed_score: o.displayed_score,
                submit_time: submitted,
            });
            prev = Some(o);
        }
    }
    out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.position.cmp(&b.position)));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovementStats {
    pub n_moves: usize,
    pub median: f64,
    pub within_1: f64,
    pub within_3: f64,
    pub within_5: f64,
}

/// Distribution of |position(t+1) - position(t)| over each article's
/// consecutive observations.
pub fn position_movement_stats(observations: &[Observation]) -> Result<MovementStats> {
    let mut by_article: BTreeMap<&ArticleId, Vec<(i64, u32)>> = BTreeMap::new();
    for o in observations {
        by_article.entry(&o.article_id).or_default().push((o.bucket, o.position));
    }
    let mut moves: Vec<u32> = Vec::new();
    for seq in by_article.values_mut() {
        seq.sort_unstable();
        moves.extend(seq.windows(2).map(|w| w[0].1.abs_diff(w[1].1)));
    }
    if moves.is_empty() {
        return Err(Error::InvalidArgument("need an article with at least two observations".into()));
    }
    moves.sort_unstable();
    let n = moves.len();
    let median = if n % 2 == 1 {
        moves[n / 2] as f64
    } else {
        (moves[n / 2 - 1] + moves[n / 2]) as f64 / 2.0
    };
    let share = |k: u32| moves.iter().filter(|&&m| m <= k).count() as f64 / n as f64;
    Ok(MovementStats { n_moves: n, median, within_1: share(1), within_3: share(3), within_5: share(5) })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"t":"2014-05-27T10:00:00-05:00","id":"a","pos":3,"up":12,"down":2,"score":10,"submitted":"2014-05-27T09:00:00-05:00"}"#;

    #[test]
    fn parses_schema() {
        let input = format!("{LINE}\n\n");
        let recs = parse_observations(input.as_bytes(), Mode::Reddit).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].position, 3);
        assert_eq!(recs[0].age_hours(), 1.0);
        assert!(parse_observations("".as_bytes(), Mode::Hn).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_records() {
        let hn = parse_observations(LINE.as_bytes(), Mode::Hn).unwrap_err();
        assert!(matches!(hn, Error::Parse { line: 1, .. }));
        let zero = LINE.replace("\"pos\":3", "\"pos\":0");
        assert!(parse_observations(zero.as_bytes(), Mode::Reddit).is_err());
        let dup = format!("{LINE}\n{LINE}\n");
        assert!(matches!(parse_observations(dup.as_bytes(), Mode::Reddit), Err(Error::Parse { line: 2, .. })));
        let early = LINE.replace("09:00:00", "11:00:00");
        assert!(parse_observations(early.as_bytes(), Mode::Reddit).is_err());
        let garbage = format!("{LINE}\nnot json\n");
        assert!(matches!(parse_observations(garbage.as_bytes(), Mode::Reddit), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn write_then_parse() {
        let recs = parse_observations(LINE.as_bytes(), Mode::Reddit).unwrap();
        let mut buf = Vec::new();
        write_observations(&mut buf, &recs).unwrap();
        assert_eq!(parse_observations(buf.as_slice(), Mode::Reddit).unwrap(), recs);
    }

    fn obs(id: &str, bucket: i64, position: u32) -> Observation {
        Observation {
            bucket,
            article_id: id.into(),
            position,
            votes_up: 0,
            votes_down: 0,
            displayed_score: 0,
            age_hours: 0.0,
        }
    }

    #[test]
    fn movement_examples() {
        let still = [obs("a", 0, 4), obs("a", 1, 4), obs("a", 2, 4)];
        let s = position_movement_stats(&still).unwrap();
        assert_eq!((s.median, s.within_1), (0.0, 1.0));
        let moving = [obs("a", 2, 4), obs("a", 0, 1), obs("a", 1, 2)];
        let m = position_movement_stats(&moving).unwrap();
        assert_eq!(m.n_moves, 2);
        assert_eq!(m.median, 1.5);
        assert_eq!(m.within_1, 0.5);
        assert_eq!(m.within_3, 1.0);
        assert!(position_movement_stats(&[obs("a", 0, 1), obs("b", 0, 2)]).is_err());
    }
}
