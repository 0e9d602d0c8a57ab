//! Synthetic voting markets with known ground truth.
//!
//! Users follow the examination hypothesis: each position `j` is examined
//! with probability `view_curve[j-1]` regardless of what sits there, and an
//! examined item is voted on (or downloaded) with a probability proportional
//! to its true quality. Two settings are supported:
//!
//! - **Aggregator**: a Reddit- or HN-style list re-ranked once per tick, with
//!   one tick per observation bucket.
//! - **MusicLab**: users are assigned to independent worlds; social worlds
//!   sort by download count, the last world shows a fresh random order to
//!   every user.
//!
//! Examination draws come from their own RNG stream, so swapping which item
//! occupies a slot never changes who looked at that slot.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimator::{Exposure, Observation};
use crate::ranking::{rank_articles, ArticleState, Ranked, RankingMode, RankingRule};
use crate::{ArticleId, Error, Result};

const STREAM_EXAMINE: u64 = 1;
const STREAM_VOTE: u64 = 2;
const STREAM_NEW_PAGE: u64 = 3;
const STREAM_WORLD: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True per-examination vote propensity of each article.
    pub qualities: BTreeMap<ArticleId, f64>,
    /// Examination probability by position (index 0 is position 1).
    pub view_curve: Vec<f64>,
    /// Effect of displayed popularity: multiplies `ln max(S,1)` in aggregator
    /// mode and the raw download count in MusicLab mode.
    pub social_weight: f64,
    /// Probability that an examined vote is a downvote (Reddit only).
    #[serde(default)]
    pub downvote_prob: BTreeMap<ArticleId, f64>,
    /// Per-hour log-rate decay of voting propensity; at most 0.
    #[serde(default)]
    pub age_decay: f64,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.qualities.values().any(|&q| !(q > 0.0)) {
            return Err(Error::InvalidConfig("all qualities must be positive".into()));
        }
        if self.view_curve.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidConfig("view curve entries must lie in [0, 1]".into()));
        }
        if self.view_curve.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig("view curve must be non-increasing".into()));
        }
        if self.downvote_prob.values().any(|&d| !(0.0..1.0).contains(&d)) {
            return Err(Error::InvalidConfig("downvote probabilities must lie in [0, 1)".into()));
        }
        if self.age_decay > 0.0 {
            return Err(Error::InvalidConfig("age decay must be <= 0".into()));
        }
        Ok(())
    }

    fn view(&self, position: u32) -> f64 {
        self.view_curve.get(position as usize - 1).copied().unwrap_or(0.0)
    }
}

/// Recipe for drawing a random [`GroundTruth`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSpec {
    /// `view(j) = exp(-view_decay * (j - 1))`; 0 gives a uniform curve.
    pub view_decay: f64,
    /// Length of the view curve.
    pub positions: usize,
    /// Largest true quality.
    pub max_quality: f64,
    /// Qualities are log-uniform on `[max_quality * exp(-spread), max_quality]`.
    pub quality_log_spread: f64,
    pub social_weight: f64,
    pub age_decay: f64,
    /// Downvote probabilities are uniform on this range (Reddit only).
    pub downvote_range: Option<(f64, f64)>,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            view_decay: 0.05,
            positions: 100,
            max_quality: 0.2,
            quality_log_spread: 2.5,
            social_weight: 0.0,
            age_decay: 0.0,
            downvote_range: None,
        }
    }
}

impl TruthSpec {
    pub fn draw(&self, ids: &[ArticleId], seed: u64) -> GroundTruth {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7275_7468);
        let qualities = ids
            .iter()
            .map(|id| {
                let u: f64 = rng.gen();
                (id.clone(), self.max_quality * (-self.quality_log_spread * u).exp())
            })
            .collect();
        let downvote_prob = match self.downvote_range {
            Some((lo, hi)) => ids.iter().map(|id| (id.clone(), rng.gen_range(lo..=hi))).collect(),
            None => BTreeMap::new(),
        };
        GroundTruth {
            qualities,
            view_curve: exponential_view_curve(self.positions, self.view_decay),
            social_weight: self.social_weight,
            downvote_prob,
            age_decay: self.age_decay,
        }
    }
}

pub fn exponential_view_curve(len: usize, decay: f64) -> Vec<f64> {
    (0..len).map(|j| (-decay * j as f64).exp()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Aggregator,
    MusicLab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub mode: SimMode,
    pub n_articles: usize,
    pub n_ticks: usize,
    pub users_per_tick: usize,
    /// Minutes per tick and per observation bucket.
    pub bucket_len_minutes: u32,
    pub rule: RankingRule,
    pub n_social_worlds: usize,
    pub include_random_world: bool,
    pub seed: u64,
    /// Tick at which each article enters; empty means staggered arrivals
    /// over the first 80% of the run.
    pub arrival_schedule: BTreeMap<u64, Vec<ArticleId>>,
    /// Upvotes an article starts with (the submitter's own vote).
    pub initial_upvotes: u64,
    /// Chance that a user examines each article that is not in the ranked
    /// list (the HN "new" page).
    pub new_page_view: f64,
    /// Keep every vote event in the log.
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: SimMode::Aggregator,
            n_articles: 100,
            n_ticks: 500,
            users_per_tick: 50,
            bucket_len_minutes: 10,
            rule: RankingRule::hn(0.0),
            n_social_worlds: 8,
            include_random_world: true,
            seed: 0,
            arrival_schedule: BTreeMap::new(),
            initial_upvotes: 1,
            new_page_view: 0.0,
            record_events: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_articles == 0 || self.n_ticks == 0 || self.users_per_tick == 0 {
            return Err(Error::InvalidConfig(
                "n_articles, n_ticks and users_per_tick must all be at least 1".into(),
            ));
        }
        if self.bucket_len_minutes == 0 {
            return Err(Error::InvalidConfig("bucket length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.new_page_view) {
            return Err(Error::InvalidConfig("new_page_view must lie in [0, 1]".into()));
        }
        if self.mode == SimMode::MusicLab && self.n_social_worlds + self.include_random_world as usize == 0 {
            return Err(Error::InvalidConfig("MusicLab needs at least one world".into()));
        }
        Ok(())
    }

    pub fn article_ids(&self) -> Vec<ArticleId> {
        let width = self.n_articles.to_string().len().max(3);
        (0..self.n_articles).map(|i| ArticleId::new(format!("a{i:0width$}"))).collect()
    }

    /// Resolved arrival schedule.
    pub fn arrivals(&self) -> BTreeMap<u64, Vec<ArticleId>> {
        if !self.arrival_schedule.is_empty() {
            return self.arrival_schedule.clone();
        }
        let span = ((self.n_ticks as f64 * 0.8).floor() as u64).max(1);
        let mut out: BTreeMap<u64, Vec<ArticleId>> = BTreeMap::new();
        for (i, id) in self.article_ids().into_iter().enumerate() {
            let tick = i as u64 * span / self.n_articles as u64;
            out.entry(tick).or_default().push(id);
        }
        out
    }
}

/// Inflate both vote counts by `fuzz`, leaving the score unchanged.
pub fn fuzz_votes(up: u64, down: u64, fuzz: u64) -> (u64, u64) {
    (up + fuzz, down + fuzz)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteEvent {
    pub tick: u64,
    pub user: u32,
    pub article_id: ArticleId,
    /// `None` for votes cast from the new page.
    pub position: Option<u32>,
    pub up: bool,
}

/// Everything that happened during one tick.
#[derive(Clone, Debug, Default)]
pub struct TickOutcome {
    pub events: Vec<VoteEvent>,
    /// Row-major `users x view_curve.len()` examination mask.
    pub examined: Vec<bool>,
}

/// Live state of an aggregator market.
#[derive(Clone, Debug)]
pub struct AggregatorWorld {
    states: Vec<ArticleState>,
    index: BTreeMap<ArticleId, usize>,
    ranking: Vec<Ranked>,
    tick: u64,
    exam_rng: ChaCha8Rng,
    vote_rng: ChaCha8Rng,
    new_rng: ChaCha8Rng,
}

impl AggregatorWorld {
    pub fn new(seed: u64) -> Self {
        let stream = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        Self {
            states: Vec::new(),
            index: BTreeMap::new(),
            ranking: Vec::new(),
            tick: 0,
            exam_rng: stream(STREAM_EXAMINE),
            vote_rng: stream(STREAM_VOTE),
            new_rng: stream(STREAM_NEW_PAGE),
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn now(&self, config: &SimConfig) -> i64 {
        self.tick as i64 * config.bucket_len_minutes as i64
    }

    pub fn states(&self) -> &[ArticleState] {
        &self.states
    }

    pub fn ranking(&self) -> &[Ranked] {
        &self.ranking
    }

    pub fn state(&self, id: &ArticleId) -> Option<&ArticleState> {
        self.index.get(id).map(|&i| &self.states[i])
    }

    /// Add an article submitted now.
    pub fn submit(&mut self, id: ArticleId, config: &SimConfig) {
        if self.index.contains_key(&id) {
            return;
        }
        let mut state = ArticleState::new(id.clone(), self.now(config));
        state.upvotes = config.initial_upvotes;
        self.index.insert(id, self.states.len());
        self.states.push(state);
    }

    /// Recompute the ranking from current tallies.
    pub fn rerank(&mut self, config: &SimConfig) {
        self.ranking = rank_articles(&self.states, &config.rule, self.now(config));
    }

    fn vote_probability(&self, truth: &GroundTruth, state: &ArticleState, now: i64) -> Result<f64> {
        let q = *truth
            .qualities
            .get(&state.article_id)
            .ok_or_else(|| Error::UnknownArticle(state.article_id.clone()))?;
        let age_hours = (now - state.submit_time) as f64 / 60.0;
        let shown = state.score().max(1) as f64;
        let prob = q * (truth.age_decay * age_hours + truth.social_weight * shown.ln()).exp();
        if prob > 1.0 {
            return Err(Error::ProbabilityOverflow { article: state.article_id.clone(), prob });
        }
        Ok(prob)
    }

    fn cast(&mut self, truth: &GroundTruth, idx: usize, up_draw: f64, rule: RankingMode) -> bool {
        let down = rule == RankingMode::RedditHot
            && truth
                .downvote_prob
                .get(&self.states[idx].article_id)
                .is_some_and(|&d| up_draw < d);
        !down
    }

    /// Run one tick: every user scans the current ranking, then tallies are
    /// updated and the list is re-ranked for the next tick.
    pub fn step(&mut self, truth: &GroundTruth, config: &SimConfig) -> Result<TickOutcome> {
        let now = self.now(config);
        let curve_len = truth.view_curve.len();
        let probs: Vec<f64> = self
            .ranking
            .iter()
            .map(|r| self.vote_probability(truth, &self.states[self.index[&r.article_id]], now))
            .collect::<Result<_>>()?;
        let ranked: std::collections::HashSet<&ArticleId> =
            self.ranking.iter().map(|r| &r.article_id).collect();
        let unranked: Vec<usize> = (0..self.states.len())
            .filter(|&i| !ranked.contains(&self.states[i].article_id))
            .collect();
        let unranked_probs: Vec<f64> = if config.new_page_view > 0.0 {
            unranked
                .iter()
                .map(|&i| self.vote_probability(truth, &self.states[i], now))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        let mut outcome = TickOutcome {
            events: Vec::new(),
            examined: Vec::with_capacity(config.users_per_tick * curve_len),
        };
        let mut delta: Vec<(usize, bool)> = Vec::new();
        for user in 0..config.users_per_tick as u32 {
            #[allow(clippy::needless_range_loop)]
            for j in 0..curve_len {
                let looked = self.exam_rng.gen::<f64>() < truth.view_curve[j];
                outcome.examined.push(looked);
                if !looked || j >= self.ranking.len() {
                    continue;
                }
                if self.vote_rng.gen::<f64>() < probs[j] {
                    let idx = self.index[&self.ranking[j].article_id];
                    let draw = self.vote_rng.gen::<f64>();
                    let up = self.cast(truth, idx, draw, config.rule.mode);
                    delta.push((idx, up));
                    if config.record_events {
                        outcome.events.push(VoteEvent {
                            tick: self.tick,
                            user,
                            article_id: self.states[idx].article_id.clone(),
                            position: Some(j as u32 + 1),
                            up,
                        });
                    }
                }
            }
            for (&prob, &idx) in unranked_probs.iter().zip(&unranked) {
                if self.new_rng.gen::<f64>() < config.new_page_view && self.new_rng.gen::<f64>() < prob {
                    let draw = self.new_rng.gen::<f64>();
                    let up = self.cast(truth, idx, draw, config.rule.mode);
                    delta.push((idx, up));
                    if config.record_events {
                        outcome.events.push(VoteEvent {
                            tick: self.tick,
                            user,
                            article_id: self.states[idx].article_id.clone(),
                            position: None,
                            up,
                        });
                    }
                }
            }
        }
        for (idx, up) in delta {
            if up {
                self.states[idx].upvotes += 1;
            } else {
                self.states[idx].downvotes += 1;
            }
        }
        self.tick += 1;
        self.rerank(config);
        Ok(outcome)
    }
}

/// Output of an aggregator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    pub observations: Vec<Observation>,
    #[serde(default)]
    pub events: Option<Vec<VoteEvent>>,
    pub truth: GroundTruth,
    /// Final score (up - down) per article, including the initial votes.
    pub final_scores: BTreeMap<ArticleId, i64>,
    /// Final raw tallies per article.
    pub final_tallies: BTreeMap<ArticleId, (u64, u64)>,
    /// Submission time in minutes per article.
    pub submit_minutes: BTreeMap<ArticleId, i64>,
    /// Votes cast while an article was off the ranked list, as (up, down).
    pub unranked_votes: BTreeMap<ArticleId, (u64, u64)>,
    pub initial_upvotes: u64,
    pub bucket_len_minutes: u32,
}

/// Run an aggregator market for `config.n_ticks` ticks.
///
/// Each ranked article yields one observation per tick with its position,
/// displayed score and age as of the start of the tick and the votes it
/// collected during the tick.
pub fn run_aggregator_sim(config: &SimConfig, truth: &GroundTruth) -> Result<ObservationLog> {
    if config.mode != SimMode::Aggregator {
        return Err(Error::InvalidConfig("run_aggregator_sim needs aggregator mode".into()));
    }
    config.validate()?;
    truth.validate()?;
    let arrivals = config.arrivals();
    let mut world = AggregatorWorld::new(config.seed);
    let mut observations = Vec::new();
    let mut events = config.record_events.then(Vec::new);
    let mut unranked_votes: BTreeMap<ArticleId, (u64, u64)> = BTreeMap::new();

    for tick in 0..config.n_ticks as u64 {
        if let Some(ids) = arrivals.get(&tick) {
            for id in ids {
                if !truth.qualities.contains_key(id) {
                    return Err(Error::UnknownArticle(id.clone()));
                }
                world.submit(id.clone(), config);
            }
        }
        world.rerank(config);
        let now = world.now(config);
        let snapshot: Vec<(ArticleId, u32, i64, f64, u64, u64)> = world
            .ranking()
            .iter()
            .map(|r| {
                let s = world.state(&r.article_id).unwrap();
                (
                    r.article_id.clone(),
                    r.position,
                    s.score(),
                    (now - s.submit_time) as f64 / 60.0,
                    s.upvotes,
                    s.downvotes,
                )
            })
            .collect();
        let before: BTreeMap<ArticleId, (u64, u64)> = world
            .states()
            .iter()
            .map(|s| (s.article_id.clone(), (s.upvotes, s.downvotes)))
            .collect();

        let outcome = world.step(truth, config)?;
        if let Some(ev) = events.as_mut() {
            ev.extend(outcome.events);
        }

        let mut on_list = std::collections::HashSet::new();
        for (id, position, score, age_hours, up0, down0) in snapshot {
            let s = world.state(&id).unwrap();
            observations.push(Observation {
                bucket: tick as i64,
                article_id: id.clone(),
                position,
                votes_up: s.upvotes - up0,
                votes_down: s.downvotes - down0,
                displayed_score: score,
                age_hours,
            });
            on_list.insert(id);
        }
        for s in world.states() {
            if on_list.contains(&s.article_id) {
                continue;
            }
            let (u0, d0) = before.get(&s.article_id).copied().unwrap_or((s.upvotes, s.downvotes));
            if s.upvotes > u0 || s.downvotes > d0 {
                let e = unranked_votes.entry(s.article_id.clone()).or_default();
                e.0 += s.upvotes - u0;
                e.1 += s.downvotes - d0;
            }
        }
    }

    let final_tallies = world
        .states()
        .iter()
        .map(|s| (s.article_id.clone(), (s.upvotes, s.downvotes)))
        .collect();
    Ok(ObservationLog {
        observations,
        events,
        truth: truth.clone(),
        final_scores: world.states().iter().map(|s| (s.article_id.clone(), s.score())).collect(),
        final_tallies,
        submit_minutes: world.states().iter().map(|s| (s.article_id.clone(), s.submit_time)).collect(),
        unranked_votes,
        initial_upvotes: config.initial_upvotes,
        bucket_len_minutes: config.bucket_len_minutes,
    })
}

/// One user's view of one item in a MusicLab world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MusicLabRecord {
    pub world: u32,
    /// Index of the user within the world, in arrival order.
    pub user: u32,
    pub item: ArticleId,
    pub position: u32,
    pub downloaded: bool,
    /// Downloads of the item in this world when the user arrived.
    pub downloads_before: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MusicLabLog {
    pub records: Vec<MusicLabRecord>,
    pub truth: GroundTruth,
    pub n_social_worlds: usize,
    /// World index of the randomly ordered world, if present.
    pub random_world: Option<u32>,
    /// Final downloads per world per item.
    pub downloads: Vec<BTreeMap<ArticleId, u64>>,
}

impl MusicLabLog {
    fn bucket(world: u32, user: u32) -> i64 {
        ((world as i64) << 32) | user as i64
    }

    /// Per-user download indicators from the social worlds, with the
    /// world's download count carried in `displayed_score`.
    pub fn social_observations(&self) -> Vec<Observation> {
        self.records
            .iter()
            .filter(|r| Some(r.world) != self.random_world)
            .map(|r| Observation {
                bucket: Self::bucket(r.world, r.user),
                article_id: r.item.clone(),
                position: r.position,
                votes_up: r.downloaded as u64,
                votes_down: 0,
                displayed_score: r.downloads_before as i64,
                age_hours: 0.0,
            })
            .collect()
    }

    /// Positions shown to each random-world user.
    pub fn random_world_exposures(&self) -> Vec<Exposure> {
        self.records
            .iter()
            .filter(|r| Some(r.world) == self.random_world)
            .map(|r| Exposure { user: r.user as u64, item: r.item.clone(), position: r.position })
            .collect()
    }

    pub fn random_world_downloads(&self) -> Option<&BTreeMap<ArticleId, u64>> {
        self.random_world.map(|w| &self.downloads[w as usize])
    }
}

/// Run a multi-world MusicLab experiment with
/// `n_ticks * users_per_tick` users, each assigned to a uniformly random
/// world on arrival.
pub fn run_musiclab_sim(config: &SimConfig, truth: &GroundTruth) -> Result<MusicLabLog> {
    if config.mode != SimMode::MusicLab {
        return Err(Error::InvalidConfig("run_musiclab_sim needs musiclab mode".into()));
    }
    config.validate()?;
    truth.validate()?;
    let items: Vec<ArticleId> = truth.qualities.keys().cloned().collect();
    if items.is_empty() {
        return Err(Error::InvalidConfig("no items".into()));
    }
    let n_worlds = config.n_social_worlds + config.include_random_world as usize;
    let random_world = config.include_random_world.then_some(config.n_social_worlds as u32);
    let stream = |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(s);
        rng
    };
    let mut exam_rng = stream(STREAM_EXAMINE);
    let mut vote_rng = stream(STREAM_VOTE);
    let mut world_rng = stream(STREAM_WORLD);

    let mut downloads: Vec<BTreeMap<ArticleId, u64>> =
        vec![items.iter().map(|i| (i.clone(), 0)).collect(); n_worlds];
    let mut users_in_world = vec![0u32; n_worlds];
    let mut records = Vec::new();
    let qualities: Vec<f64> = items.iter().map(|i| truth.qualities[i]).collect();

    for _ in 0..config.n_ticks * config.users_per_tick {
        let w = world_rng.gen_range(0..n_worlds);
        let user = users_in_world[w];
        users_in_world[w] += 1;
        let social = Some(w as u32) != random_world;

        let mut order: Vec<usize> = (0..items.len()).collect();
        if social {
            let counts = &downloads[w];
            order.sort_by(|&a, &b| counts[&items[b]].cmp(&counts[&items[a]]).then(a.cmp(&b)));
        } else {
            order.shuffle(&mut world_rng);
        }

        let mut got = Vec::new();
        for (slot, &item) in order.iter().enumerate() {
            let position = slot as u32 + 1;
            let looked = exam_rng.gen::<f64>() < truth.view(position);
            let before = downloads[w][&items[item]];
            let mut downloaded = false;
            if looked {
                let boost = if social { (truth.social_weight * before as f64).exp() } else { 1.0 };
                let prob = qualities[item] * boost;
                if prob > 1.0 {
                    return Err(Error::ProbabilityOverflow { article: items[item].clone(), prob });
                }
                downloaded = vote_rng.gen::<f64>() < prob;
            }
            if downloaded {
                got.push(item);
            }
            records.push(MusicLabRecord {
                world: w as u32,
                user,
                item: items[item].clone(),
                position,
                downloaded,
                downloads_before: before,
            });
        }
        for item in got {
            *downloads[w].get_mut(&items[item]).unwrap() += 1;
        }
    }
    Ok(MusicLabLog {
        records,
        truth: truth.clone(),
        n_social_worlds: config.n_social_worlds,
        random_world,
        downloads,
    })
}
