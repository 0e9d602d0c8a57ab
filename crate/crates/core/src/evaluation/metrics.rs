use serde::{Deserialize, Serialize};

use crate::summation::Neumaier;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: f64,
    pub mae: f64,
    pub mse: f64,
    pub n: usize,
}

/// Coefficient of determination (about the observed mean), mean absolute
/// error and mean squared error.
pub fn metrics(observed: &[f64], predicted: &[f64]) -> Result<MetricsReport> {
    if observed.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} observed, {} predicted",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::InvalidArgument("no data points".into()));
    }
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let (mut ss_tot, mut ss_res, mut abs) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
    for (&y, &yhat) in observed.iter().zip(predicted) {
        let err = y - yhat;
        ss_tot.add((y - mean) * (y - mean));
        ss_res.add(err * err);
        abs.add(err.abs());
    }
    let ss_tot = ss_tot.value();
    if !(ss_tot > 0.0) {
        return Err(Error::Degenerate("observed values have zero variance".into()));
    }
    Ok(MetricsReport {
        r2: 1.0 - ss_res.value() / ss_tot,
        mae: abs.value() / n,
        mse: ss_res.value() / n,
        n: observed.len(),
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need two equal-length samples of size >= 2".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need two equal-length samples of size >= 2".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn metric_examples() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.r2, m.mae, m.mse), (1.0, 0.0, 0.0));
        let m = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.r2, 0.0);
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap();
        assert_eq!(m.r2, -1.0);
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.mse - 4.0 / 3.0).abs() < 1e-15);
        assert!(metrics(&[2.0, 2.0], &[1.0, 3.0]).is_err());
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.5, 7.0, 7.5];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev).unwrap(), -1.0);
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    proptest! {
        #[test]
        fn jensen_mse_at_least_mae_squared(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..50)) {
            let (obs, pred): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(m) = metrics(&obs, &pred) {
                prop_assert!(m.mse + 1e-9 >= m.mae * m.mae);
                prop_assert!(m.r2 <= 1.0);
            }
        }

        #[test]
        fn metrics_ignore_order(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40), rot in 0usize..40) {
            let (obs, pred): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (obs2, pred2): (Vec<f64>, Vec<f64>) = rotated.into_iter().unzip();
            if let (Ok(a), Ok(b)) = (metrics(&obs, &pred), metrics(&obs2, &pred2)) {
                prop_assert!((a.r2 - b.r2).abs() < 1e-12);
                prop_assert!((a.mae - b.mae).abs() < 1e-12);
            }
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(xs in prop::collection::vec(-50.0f64..50.0, 3..40), seed in 0u64..1000) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.3 + ((i as u64 * 7919 + seed) % 13) as f64).collect();
            if let Ok(base) = spearman(&xs, &ys) {
                let fx: Vec<f64> = xs.iter().map(|x| (x / 10.0).exp()).collect();
                let fy: Vec<f64> = ys.iter().map(|y| y * y * y + 2.0 * y).collect();
                prop_assert!((spearman(&fx, &fy).unwrap() - base).abs() < 1e-12);
            }
        }
    }
}
