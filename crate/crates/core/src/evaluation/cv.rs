use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, MetricsReport};
use crate::estimator::{self, build_design, fit_design, FitOptions, ModelVariant, Observation};
use crate::quality::{compute_vote_ratios, position_bias_curve, predicted_score_growth};
use crate::{ArticleId, Error, Mode, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Reddit mode also scores predicted score growth.
    pub mode: Mode,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { k: 5, seed: 0, fit: FitOptions::default(), mode: Mode::Hn }
    }
}

/// Fold index for each of `n` observations: a seeded shuffle dealt
/// round-robin, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (slot, idx) in order.into_iter().enumerate() {
        folds[idx] = slot % k;
    }
    folds
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldCoverage {
    pub test_size: usize,
    pub scored: usize,
    /// Test observations whose article or position never appeared in the
    /// training split (or was excluded there).
    pub dropped: usize,
    /// Test observations whose article and position were both fitted, but in
    /// different connected components, so their rate is not identified.
    #[serde(default)]
    pub unidentified: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPrediction {
    /// Index into the input observations.
    pub index: usize,
    pub fold: usize,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: ModelVariant,
    /// Per-fold vote-count metrics; `None` when a fold's observed values
    /// have no variance.
    pub per_fold: Vec<Option<MetricsReport>>,
    pub mean: MetricsReport,
    /// Standard deviation of r2, mae and mse across folds.
    pub sd: MetricsReport,
    /// Score-growth metrics per fold (Reddit mode only).
    pub score_per_fold: Option<Vec<Option<MetricsReport>>>,
    pub coverage: Vec<FoldCoverage>,
    pub predictions: Vec<CvPrediction>,
    /// Metrics over all held-out predictions pooled together.
    pub pooled: Option<MetricsReport>,
    /// Folds whose fit did not reach tolerance.
    pub unconverged_folds: usize,
}

/// Mean and sd over folds with defined metrics; falls back to the pooled
/// metrics when no single fold has any (leave-one-out, for instance).
fn summarize(
    per_fold: &[Option<MetricsReport>],
    pooled: Option<&MetricsReport>,
) -> Result<(MetricsReport, MetricsReport)> {
    let defined: Vec<&MetricsReport> = per_fold.iter().flatten().collect();
    if defined.is_empty() {
        let pooled = pooled.ok_or_else(|| Error::Degenerate("held-out votes have no variance".into()))?;
        return Ok((*pooled, MetricsReport { r2: 0.0, mae: 0.0, mse: 0.0, n: 0 }));
    }
    let n = defined.len() as f64;
    let mean_of = |f: fn(&MetricsReport) -> f64| defined.iter().map(|m| f(m)).sum::<f64>() / n;
    let sd_of = |f: fn(&MetricsReport) -> f64, mean: f64| {
        if defined.len() < 2 {
            0.0
        } else {
            (defined.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
    };
    let mean = MetricsReport {
        r2: mean_of(|m| m.r2),
        mae: mean_of(|m| m.mae),
        mse: mean_of(|m| m.mse),
        n: defined.iter().map(|m| m.n).sum::<usize>() / defined.len(),
    };
    let sd = MetricsReport {
        r2: sd_of(|m| m.r2, mean.r2),
        mae: sd_of(|m| m.mae, mean.mae),
        mse: sd_of(|m| m.mse, mean.mse),
        n: defined.len(),
    };
    Ok((mean, sd))
}

fn cv_with_folds(
    observations: &[Observation],
    variant: ModelVariant,
    folds: &[usize],
    opts: &CvOptions,
) -> Result<CvReport> {
    let mut per_fold = Vec::with_capacity(opts.k);
    let mut score_per_fold = Vec::with_capacity(opts.k);
    let mut coverage = Vec::with_capacity(opts.k);
    let mut predictions = Vec::new();
    let mut unconverged = 0;

    for fold in 0..opts.k {
        let train: Vec<Observation> = observations
            .iter()
            .zip(folds)
            .filter(|(_, &f)| f != fold)
            .map(|(o, _)| o.clone())
            .collect();
        let test: Vec<(usize, &Observation)> =
            observations.iter().enumerate().filter(|(i, _)| folds[*i] == fold).collect();
        let design = build_design(&train, variant, &opts.fit)?;
        let fit = fit_design(&design, &opts.fit);
        if !fit.converged {
            unconverged += 1;
        }
        let ratios = match opts.mode {
            Mode::Reddit => Some(compute_vote_ratios(&train).or_else(|_| {
                // articles with no training votes are already excluded from the fit
                let voted: Vec<Observation> =
                    train.iter().filter(|o| fit.q.contains_key(&o.article_id)).cloned().collect();
                compute_vote_ratios(&voted)
            })?),
            Mode::Hn => None,
        };

        let (article_comp, position_comp) = design.component_labels();
        let article_comp: HashMap<&ArticleId, usize> = design.articles().iter().zip(article_comp).collect();
        let position_comp: HashMap<u32, usize> = design.positions().iter().copied().zip(position_comp).collect();

        let (mut obs_v, mut pred_v, mut obs_s, mut pred_s) = (vec![], vec![], vec![], vec![]);
        let (mut dropped, mut unidentified) = (0, 0);
        for (index, o) in &test {
            if let (Some(a), Some(p)) = (article_comp.get(&o.article_id), position_comp.get(&o.position)) {
                if a != p {
                    unidentified += 1;
                    continue;
                }
            }
            let rate = estimator::predict_rate(&fit, &o.article_id, o.position, o.age_hours, o.displayed_score);
            let Ok(rate) = rate else {
                dropped += 1;
                continue;
            };
            obs_v.push(o.total_votes() as f64);
            pred_v.push(rate);
            predictions.push(CvPrediction {
                index: *index,
                fold,
                observed: o.total_votes() as f64,
                predicted: rate,
            });
            if let Some(r) = ratios.as_ref() {
                let growth = predicted_score_growth(
                    &fit,
                    Some(r),
                    &o.article_id,
                    o.position,
                    o.age_hours,
                    o.displayed_score,
                )?;
                obs_s.push(o.votes_up as f64 - o.votes_down as f64);
                pred_s.push(growth);
            }
        }
        coverage.push(FoldCoverage { test_size: test.len(), scored: obs_v.len(), dropped, unidentified });
        per_fold.push(metrics(&obs_v, &pred_v).ok());
        score_per_fold.push(metrics(&obs_s, &pred_s).ok());
    }

    let pooled = {
        let (o, p): (Vec<f64>, Vec<f64>) = predictions.iter().map(|x| (x.observed, x.predicted)).unzip();
        metrics(&o, &p).ok()
    };
    let (mean, sd) = summarize(&per_fold, pooled.as_ref())?;
    Ok(CvReport {
        variant,
        per_fold,
        mean,
        sd,
        score_per_fold: (opts.mode == Mode::Reddit).then_some(score_per_fold),
        coverage,
        predictions,
        pooled,
        unconverged_folds: unconverged,
    })
}

/// K-fold cross-validation by observation. Each fold is fitted on the
/// remaining folds and scored on held-out vote counts; held-out rows whose
/// article or position the training fit never saw, or whose article and
/// position sit in different components of the training design, are dropped
/// and counted.
pub fn kfold_cv(observations: &[Observation], variant: ModelVariant, opts: &CvOptions) -> Result<CvReport> {
    if opts.k < 2 || opts.k > observations.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} must lie in [2, {}]",
            opts.k,
            observations.len()
        )));
    }
    let folds = fold_assignment(observations.len(), opts.k, opts.seed);
    cv_with_folds(observations, variant, &folds, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparisonRow {
    pub variant: ModelVariant,
    pub mean_r2: f64,
    pub sd_r2: f64,
    /// Position curve of the full-data fit rises somewhere by more than the
    /// monotonicity slack.
    pub non_monotone_positions: bool,
    pub report: CvReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub rows: Vec<ModelComparisonRow>,
}

impl ModelComparison {
    pub fn mean_r2(&self, variant: ModelVariant) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == variant).map(|r| r.mean_r2)
    }
}

/// Cross-validate several variants on one shared fold assignment.
pub fn model_comparison(
    observations: &[Observation],
    variants: &[ModelVariant],
    opts: &CvOptions,
) -> Result<ModelComparison> {
    if opts.k < 2 || opts.k > observations.len() {
        return Err(Error::InvalidArgument(format!("k = {} out of range", opts.k)));
    }
    let folds = fold_assignment(observations.len(), opts.k, opts.seed);
    let rows = variants
        .iter()
        .map(|&variant| {
            let report = cv_with_folds(observations, variant, &folds, opts)?;
            let full = estimator::fit(observations, variant, &opts.fit)?;
            Ok(ModelComparisonRow {
                variant,
                mean_r2: report.mean.r2,
                sd_r2: report.sd.r2,
                non_monotone_positions: position_bias_curve(&full).non_monotone,
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ModelComparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(bucket: i64, id: &str, position: u32, votes: u64) -> Observation {
        Observation {
            bucket,
            article_id: ArticleId::from(id),
            position,
            votes_up: votes,
            votes_down: 0,
            displayed_score: 1,
            age_hours: 0.0,
        }
    }

    #[test]
    fn folds_partition_and_repeat() {
        let a = fold_assignment(103, 5, 42);
        assert_eq!(a, fold_assignment(103, 5, 42));
        assert_ne!(a, fold_assignment(103, 5, 43));
        let mut sizes = [0; 5];
        a.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().all(|&s| s == 20 || s == 21));
    }

    #[test]
    fn cross_component_rows_are_not_scored() {
        // A only ever votes at 1 and B at 2; the lone zero-vote A@2 cell is
        // separated in training and unidentified when held out.
        let mut data: Vec<Observation> =
            (0..10).flat_map(|t| [obs(t, "A", 1, 3 + t as u64 % 2), obs(t, "B", 2, 1 + t as u64 % 3)]).collect();
        data.push(obs(10, "A", 2, 0));
        let rep = kfold_cv(&data, ModelVariant::Base, &CvOptions { k: 2, seed: 1, ..Default::default() }).unwrap();
        let held_out = fold_assignment(data.len(), 2, 1)[20];
        let unidentified: Vec<usize> = rep.coverage.iter().map(|c| c.unidentified).collect();
        assert_eq!(unidentified[held_out], 1);
        assert_eq!(unidentified.iter().sum::<usize>(), 1);
        assert!(rep.predictions.iter().all(|p| p.index != 20));
    }

    #[test]
    fn leave_one_out_on_margin_fixture() {
        let data = vec![obs(0, "A", 1, 4), obs(1, "A", 2, 2), obs(0, "B", 1, 2), obs(1, "B", 2, 1)];
        let rep = kfold_cv(&data, ModelVariant::Base, &CvOptions { k: 4, ..Default::default() }).unwrap();
        assert_eq!(rep.predictions.len(), 4);
        assert!(rep.per_fold.iter().all(Option::is_none));
        // every held-out cell is pinned down by the other three margins
        for p in &rep.predictions {
            assert!((p.predicted - p.observed).abs() < 1e-5, "{p:?}");
        }
        assert!((rep.mean.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unseen_articles_are_dropped_with_coverage() {
        let mut data = vec![obs(0, "A", 1, 4), obs(1, "A", 2, 2), obs(0, "B", 1, 2), obs(1, "B", 2, 1)];
        data.push(obs(0, "C", 1, 3));
        let rep = kfold_cv(&data, ModelVariant::Base, &CvOptions { k: 5, ..Default::default() }).unwrap();
        let total: usize = rep.coverage.iter().map(|c| c.test_size).sum();
        assert_eq!(total, 5);
        let dropped: usize = rep.coverage.iter().map(|c| c.dropped).sum();
        assert!(dropped >= 1);
        assert_eq!(rep.predictions.len(), 5 - dropped);
    }

    #[test]
    fn k_out_of_range() {
        let data = vec![obs(0, "A", 1, 4), obs(1, "A", 2, 2)];
        assert!(kfold_cv(&data, ModelVariant::Base, &CvOptions { k: 1, ..Default::default() }).is_err());
        assert!(kfold_cv(&data, ModelVariant::Base, &CvOptions { k: 3, ..Default::default() }).is_err());
    }
}
