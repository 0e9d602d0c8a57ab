use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::metrics;
use crate::sim::fuzz_votes;
use crate::{Error, Result};

const INTEGRAL_TOLERANCE: f64 = 1e-6;

/// Recover true (up, down) from the true score and upvote ratio.
pub fn defuzz_exact(true_score: i64, true_ratio: f64) -> Result<(u64, u64)> {
    if !(0.0..=1.0).contains(&true_ratio) {
        return Err(Error::InvalidArgument(format!("ratio {true_ratio} outside [0, 1]")));
    }
    let denom = 2.0 * true_ratio - 1.0;
    if denom == 0.0 {
        return Err(Error::Degenerate(if true_score == 0 {
            "a zero score with ratio 0.5 fits any vote count".into()
        } else {
            format!("score {true_score} is impossible with ratio 0.5")
        }));
    }
    let up = true_score as f64 * true_ratio / denom;
    let rounded = up.round();
    if (up - rounded).abs() > INTEGRAL_TOLERANCE || rounded < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "score {true_score} and ratio {true_ratio} give a non-integral upvote count {up}"
        )));
    }
    let down = rounded - true_score as f64;
    if down < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "score {true_score} and ratio {true_ratio} give negative downvotes"
        )));
    }
    Ok((rounded as u64, down as u64))
}

/// Scraped (fuzzed) counts for one article.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzFeatures {
    pub u_obs: f64,
    pub s_obs: f64,
    pub r_obs: f64,
}

impl FuzzFeatures {
    pub fn from_counts(up: u64, down: u64) -> Self {
        let total = (up + down) as f64;
        Self {
            u_obs: up as f64,
            s_obs: up as f64 - down as f64,
            r_obs: if total > 0.0 { up as f64 / total } else { 0.5 },
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.u_obs, self.s_obs, self.r_obs]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzSample {
    pub features: FuzzFeatures,
    pub u_true: f64,
}

/// A model mapping fuzzed counts to true upvotes.
pub trait Regressor {
    fn fit(&mut self, training: &[FuzzSample]) -> Result<()>;
    fn predict(&self, query: &FuzzFeatures) -> Result<f64>;
}

/// Mean target of the `k` nearest training points in standardized feature
/// space. Equidistant points are ordered by training index.
#[derive(Clone, Debug)]
pub struct KnnRegressor {
    pub k: usize,
    mean: [f64; 3],
    scale: [f64; 3],
    points: Vec<[f64; 3]>,
    targets: Vec<f64>,
}

impl KnnRegressor {
    pub fn new(k: usize) -> Self {
        Self { k: k.max(1), mean: [0.0; 3], scale: [1.0; 3], points: Vec::new(), targets: Vec::new() }
    }

    fn standardize(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.scale[j])
    }
}

impl Default for KnnRegressor {
    fn default() -> Self {
        Self::new(5)
    }
}

impl Regressor for KnnRegressor {
    fn fit(&mut self, training: &[FuzzSample]) -> Result<()> {
        if training.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let n = training.len() as f64;
        let raw: Vec<[f64; 3]> = training.iter().map(|s| s.features.as_array()).collect();
        for j in 0..3 {
            let mean = raw.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = raw.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            self.mean[j] = mean;
            self.scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        self.points = raw.into_iter().map(|x| self.standardize(x)).collect();
        self.targets = training.iter().map(|s| s.u_true).collect();
        Ok(())
    }

    fn predict(&self, query: &FuzzFeatures) -> Result<f64> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("regressor has not been fitted".into()));
        }
        let q = self.standardize(query.as_array());
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((0..3).map(|j| (p[j] - q[j]).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_dist);
        }
        Ok(dist[..k].iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / k as f64)
    }
}

/// Fit a k-NN baseline on `training` and predict one query.
pub fn defuzz_regress(training: &[FuzzSample], query: &FuzzFeatures, k: usize) -> Result<f64> {
    let mut model = KnnRegressor::new(k);
    model.fit(training)?;
    model.predict(query)
}

/// Synthetic de-fuzzing benchmark.
///
/// True final tallies are drawn log-uniformly; each article is scraped at
/// `settle_hours` after submission, when it holds `1 - exp(-t / 6h)` of its
/// eventual votes, and the scrape is fuzzed by an independent amount up to
/// `max_fuzz_fraction` of its total. The regressor learns the eventual true
/// upvotes from the fuzzed scrape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzBenchmark {
    pub n: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub k: usize,
    pub settle_hours: f64,
    pub max_votes: u64,
    pub max_fuzz_fraction: f64,
}

impl Default for FuzzBenchmark {
    fn default() -> Self {
        Self {
            n: 5000,
            seed: 0,
            train_fraction: 0.8,
            k: 5,
            settle_hours: 48.0,
            max_votes: 5000,
            max_fuzz_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzBenchmarkReport {
    pub n_train: usize,
    pub n_test: usize,
    pub r2: f64,
    /// r² of using the fuzzed upvotes directly.
    pub r2_raw: f64,
}

impl FuzzBenchmark {
    pub fn samples(&self) -> Vec<FuzzSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let settled = 1.0 - (-self.settle_hours / 6.0).exp();
        let log_max = (self.max_votes.max(2) as f64).ln();
        (0..self.n)
            .map(|_| {
                let total = rng.gen_range(0.0..log_max).exp().round().max(1.0) as u64;
                let ratio: f64 = rng.gen_range(0.5..1.0);
                let up = ((total as f64 * ratio).round() as u64).max(1);
                let down = total.saturating_sub(up);
                let seen_up = (up as f64 * settled).round() as u64;
                let seen_down = (down as f64 * settled).round() as u64;
                let fuzz = rng.gen_range(0.0..=self.max_fuzz_fraction * (seen_up + seen_down) as f64).round() as u64;
                let (fu, fd) = fuzz_votes(seen_up, seen_down, fuzz);
                FuzzSample { features: FuzzFeatures::from_counts(fu, fd), u_true: up as f64 }
            })
            .collect()
    }
}

pub fn run_fuzz_benchmark(cfg: &FuzzBenchmark, model: &mut dyn Regressor) -> Result<FuzzBenchmarkReport> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidConfig("train_fraction must lie in (0, 1)".into()));
    }
    let samples = cfg.samples();
    let n_train = ((samples.len() as f64) * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train >= samples.len() {
        return Err(Error::InvalidConfig("benchmark too small for the split".into()));
    }
    let (train, test) = samples.split_at(n_train);
    model.fit(train)?;
    let actual: Vec<f64> = test.iter().map(|s| s.u_true).collect();
    let predicted = test.iter().map(|s| model.predict(&s.features)).collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = test.iter().map(|s| s.features.u_obs).collect();
    Ok(FuzzBenchmarkReport {
        n_train,
        n_test: test.len(),
        r2: metrics(&actual, &predicted)?.r2,
        r2_raw: metrics(&actual, &raw)?.r2,
    })
}
