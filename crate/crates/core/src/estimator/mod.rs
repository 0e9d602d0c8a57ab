//! Poisson regression with fixed effects for article quality and position
//! bias, fitted by maximum likelihood.
//!
//! Every variant models the votes `v` an article receives in one time bucket
//! as Poisson with log-mean
//!
//! ```text
//! q[article] + p[position] (+ b_age * age) (+ b_score * ln max(S, 1)) (+ b_social * D)
//! ```
//!
//! The position effect at the reference position is pinned to 0, so each
//! `q` reads as a log vote rate at that slot.

mod design;
pub mod lbfgs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use design::{build_design, Design, Exclusion};
use lbfgs::{LbfgsOptions, Objective};

use crate::summation::Neumaier;
use crate::{ArticleId, Error, Result};

/// One bucket of votes for one article at one position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub bucket: i64,
    pub article_id: ArticleId,
    pub position: u32,
    pub votes_up: u64,
    pub votes_down: u64,
    /// Score shown at the start of the bucket (download count for MusicLab).
    pub displayed_score: i64,
    pub age_hours: f64,
}

impl Observation {
    pub fn total_votes(&self) -> u64 {
        self.votes_up + self.votes_down
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// `q + p`
    Base,
    /// `q + p + b_age * age`
    BaseTime,
    /// `q + p + b_age * age + b_score * ln max(S, 1)`
    Full,
    /// `q + p + b_social * D` on per-user download indicators
    MusicLab,
}

impl ModelVariant {
    pub fn has_age(self) -> bool {
        matches!(self, ModelVariant::BaseTime | ModelVariant::Full)
    }

    pub fn has_score(self) -> bool {
        self == ModelVariant::Full
    }

    pub fn has_social(self) -> bool {
        self == ModelVariant::MusicLab
    }

    pub fn covariate_count(self) -> usize {
        self.has_age() as usize + self.has_score() as usize + self.has_social() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Base => "base",
            ModelVariant::BaseTime => "basetime",
            ModelVariant::Full => "full",
            ModelVariant::MusicLab => "musiclab",
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "base" => Ok(ModelVariant::Base),
            "basetime" | "time" => Ok(ModelVariant::BaseTime),
            "full" => Ok(ModelVariant::Full),
            "musiclab" => Ok(ModelVariant::MusicLab),
            other => Err(Error::InvalidArgument(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Position whose effect is pinned to 0; the smallest observed position
    /// when unset.
    pub reference_position: Option<u32>,
    /// Convergence threshold on the gradient max-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// L2 weight on the article and position effects.
    pub ridge: f64,
    pub min_article_votes: u64,
    /// Drop zero-vote rows that would send an effect to infinity (a
    /// position nobody voted at, say).
    pub drop_separated: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            reference_position: None,
            tolerance: 1e-8,
            max_iterations: 500,
            ridge: 0.0,
            min_article_votes: 1,
            drop_separated: true,
        }
    }
}

/// Facts about a fit that do not belong in the serialized parameter file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitDiagnostics {
    pub excluded: Vec<Exclusion>,
    pub separated_rows: usize,
    pub n_observations: usize,
    /// Components of the article-position graph; above 1 the split between
    /// `q` and `p` is not identified.
    pub components: usize,
    pub rank_deficient: bool,
    pub grad_max_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: ModelVariant,
    pub reference_position: u32,
    pub q: BTreeMap<ArticleId, f64>,
    pub p: BTreeMap<u32, f64>,
    pub beta_age: f64,
    pub beta_score: f64,
    pub beta_social: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Observed positions without a usable row, such as positions where no
    /// vote was ever cast. Their view rate is taken to be 0, so they are left
    /// out of `p`.
    #[serde(default)]
    pub silent_positions: Vec<u32>,
    #[serde(skip)]
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    fn linear_predictor(
        &self,
        article: &ArticleId,
        position: u32,
        age_hours: f64,
        displayed_score: i64,
    ) -> Result<f64> {
        let q = *self.q.get(article).ok_or_else(|| Error::UnknownArticle(article.clone()))?;
        let mut eta = q + self.position_effect(position)?;
        if self.variant.has_age() {
            eta += self.beta_age * age_hours;
        }
        if self.variant.has_score() {
            eta += self.beta_score * (displayed_score.max(1) as f64).ln();
        }
        if self.variant.has_social() {
            eta += self.beta_social * displayed_score.max(0) as f64;
        }
        Ok(eta)
    }

    /// `p` at a position, or `-inf` at a silent one.
    pub fn position_effect(&self, position: u32) -> Result<f64> {
        match self.p.get(&position) {
            Some(&p) => Ok(p),
            None if self.silent_positions.binary_search(&position).is_ok() => Ok(f64::NEG_INFINITY),
            None => Err(Error::UnknownPosition(position)),
        }
    }

    /// Unpack a parameter vector laid out per `design`.
    pub fn from_params(design: &Design, params: &[f64]) -> Self {
        assert_eq!(params.len(), design.dim());
        let na = design.n_articles();
        let q = design.articles.iter().cloned().zip(params[..na].iter().copied()).collect();
        let p = design
            .positions
            .iter()
            .map(|&pos| {
                let v = match design.position_slot(pos).unwrap() {
                    None => 0.0,
                    Some(slot) => params[na + slot],
                };
                (pos, v)
            })
            .collect();
        let mut betas = params[na + design.n_free_positions()..].iter().copied();
        let variant = design.variant;
        let beta_age = if variant.has_age() { betas.next().unwrap() } else { 0.0 };
        let beta_score = if variant.has_score() { betas.next().unwrap() } else { 0.0 };
        let beta_social = if variant.has_social() { betas.next().unwrap() } else { 0.0 };
        FitResult {
            variant,
            reference_position: design.reference_position,
            q,
            p,
            beta_age,
            beta_score,
            beta_social,
            log_likelihood: log_likelihood(params, design),
            converged: false,
            iterations: 0,
            silent_positions: design.silent_positions.clone(),
            diagnostics: FitDiagnostics::default(),
        }
    }

    /// Pack into a parameter vector laid out per `design`. Position effects
    /// are taken as reported, so a fit whose reference is not at 0 (for
    /// example after an identification shift) keeps that offset in `q`.
    pub fn to_params(&self, design: &Design) -> Result<Vec<f64>> {
        let offset = self.p.get(&design.reference_position).copied().unwrap_or(0.0);
        let mut out = Vec::with_capacity(design.dim());
        for a in &design.articles {
            let q = self.q.get(a).ok_or_else(|| Error::UnknownArticle(a.clone()))?;
            out.push(q + offset);
        }
        for &pos in &design.positions {
            if pos == design.reference_position {
                continue;
            }
            let p = self.p.get(&pos).ok_or(Error::UnknownPosition(pos))?;
            out.push(p - offset);
        }
        let v = design.variant;
        if v.has_age() {
            out.push(self.beta_age);
        }
        if v.has_score() {
            out.push(self.beta_score);
        }
        if v.has_social() {
            out.push(self.beta_social);
        }
        Ok(out)
    }
}

#[inline]
fn eta(params: &[f64], design: &Design, row: &design::Row) -> f64 {
    let na = design.n_articles();
    let base = na + design.n_free_positions();
    let mut e = params[row.article];
    if let Some(slot) = row.position {
        e += params[na + slot];
    }
    for k in 0..design.n_covariates() {
        e += params[base + k] * row.covariates[k];
    }
    e
}

/// Poisson log-likelihood `sum v ln(mu) - mu - ln(v!)`, without any ridge
/// penalty.
pub fn log_likelihood(params: &[f64], design: &Design) -> f64 {
    assert_eq!(params.len(), design.dim(), "parameter vector does not match design");
    let mut acc = Neumaier::default();
    for row in &design.rows {
        let e = eta(params, design, row);
        acc.add(row.votes * e - e.exp() - row.ln_factorial);
    }
    acc.value()
}

/// Analytic gradient of [`log_likelihood`]: each coordinate is
/// `sum (v - mu) * x` over the observations that coordinate touches.
pub fn gradient(params: &[f64], design: &Design) -> Vec<f64> {
    let mut grad = vec![0.0; design.dim()];
    accumulate(params, design, Some(&mut grad), None);
    grad
}

/// Single pass over the rows producing log-likelihood, gradient and
/// diagonal curvature as requested.
fn accumulate(
    params: &[f64],
    design: &Design,
    grad: Option<&mut [f64]>,
    curvature: Option<&mut [f64]>,
) -> f64 {
    let dim = design.dim();
    let na = design.n_articles();
    let base = na + design.n_free_positions();
    let ncov = design.n_covariates();
    let mut ll = Neumaier::default();
    let mut g = vec![Neumaier::default(); if grad.is_some() { dim } else { 0 }];
    let mut h = vec![0.0; if curvature.is_some() { dim } else { 0 }];
    let want_g = grad.is_some();
    let want_h = curvature.is_some();
    for row in &design.rows {
        let e = eta(params, design, row);
        let mu = e.exp();
        ll.add(row.votes * e - mu - row.ln_factorial);
        if want_g {
            let r = row.votes - mu;
            g[row.article].add(r);
            if let Some(slot) = row.position {
                g[na + slot].add(r);
            }
            for k in 0..ncov {
                g[base + k].add(r * row.covariates[k]);
            }
        }
        if want_h {
            h[row.article] += mu;
            if let Some(slot) = row.position {
                h[na + slot] += mu;
            }
            for k in 0..ncov {
                h[base + k] += mu * row.covariates[k] * row.covariates[k];
            }
        }
    }
    if let Some(out) = grad {
        for (o, acc) in out.iter_mut().zip(&g) {
            *o = acc.value();
        }
    }
    if let Some(out) = curvature {
        out.copy_from_slice(&h);
    }
    ll.value()
}

/// Negative penalized log-likelihood, the quantity L-BFGS minimizes.
struct NegLogLik<'a> {
    design: &'a Design,
}

impl NegLogLik<'_> {
    fn penalized_len(&self) -> usize {
        self.design.n_articles() + self.design.n_free_positions()
    }
}

impl Objective for NegLogLik<'_> {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let ll = accumulate(x, self.design, Some(grad), None);
        let ridge = self.design.ridge;
        let mut penalty = 0.0;
        for (i, g) in grad.iter_mut().enumerate() {
            *g = -*g;
            if ridge > 0.0 && i < self.penalized_len() {
                *g += ridge * x[i];
                penalty += 0.5 * ridge * x[i] * x[i];
            }
        }
        -ll + penalty
    }

    fn diag_curvature(&self, x: &[f64], out: &mut [f64]) -> bool {
        accumulate(x, self.design, None, Some(out));
        let n = self.penalized_len();
        for (i, h) in out.iter_mut().enumerate() {
            if i < n {
                *h += self.design.ridge;
            }
            if !(*h > 1e-8) {
                *h = 1e-8;
            }
        }
        true
    }
}

/// Fit `variant` to `observations` by L-BFGS from an all-zero start.
///
/// Non-convergence is not an error: the best parameters found are returned
/// with `converged = false`.
pub fn fit(
    observations: &[Observation],
    variant: ModelVariant,
    options: &FitOptions,
) -> Result<FitResult> {
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if options.ridge < 0.0 {
        return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
    }
    let design = build_design(observations, variant, options)?;
    Ok(fit_design(&design, options))
}

/// Fit a design that has already been built.
pub fn fit_design(design: &Design, options: &FitOptions) -> FitResult {
    let objective = NegLogLik { design };
    let lbfgs_opts = LbfgsOptions {
        tolerance: options.tolerance,
        max_iterations: options.max_iterations,
        ..LbfgsOptions::default()
    };
    let report = lbfgs::minimize(&objective, vec![0.0; design.dim()], &lbfgs_opts);
    let mut result = FitResult::from_params(design, &report.x);
    result.converged = report.converged;
    result.iterations = report.iterations;
    let components = design.connected_components();
    result.diagnostics = FitDiagnostics {
        excluded: design.excluded.clone(),
        separated_rows: design.separated_rows,
        n_observations: design.n_observations(),
        components,
        rank_deficient: components > 1,
        grad_max_norm: report.grad_max_norm,
    };
    result
}

/// Expected votes `exp(q + p + ...)` for one article-position-bucket.
/// Terms missing from the fitted variant contribute nothing.
pub fn predict_rate(
    fit: &FitResult,
    article: &ArticleId,
    position: u32,
    age_hours: f64,
    displayed_score: i64,
) -> Result<f64> {
    Ok(fit.linear_predictor(article, position, age_hours, displayed_score)?.exp())
}

/// One user's view of one item in the randomly ordered world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub user: u64,
    pub item: ArticleId,
    pub position: u32,
}

/// Expected downloads per item in a world without social signal:
/// `sum over users of exp(q + p)` with the social term dropped.
pub fn predict_musiclab_random_world(
    fit: &FitResult,
    exposures: &[Exposure],
) -> Result<BTreeMap<ArticleId, f64>> {
    if fit.variant != ModelVariant::MusicLab {
        return Err(Error::InvalidArgument(format!(
            "random-world prediction needs a musiclab fit, got {}",
            fit.variant
        )));
    }
    let mut out: BTreeMap<ArticleId, Neumaier> = BTreeMap::new();
    for e in exposures {
        let q = *fit.q.get(&e.item).ok_or_else(|| Error::UnknownArticle(e.item.clone()))?;
        let p = fit.position_effect(e.position)?;
        out.entry(e.item.clone()).or_default().add((q + p).exp());
    }
    Ok(out.into_iter().map(|(k, v)| (k, v.value())).collect())
}

#[cfg(test)]
mod tests;
