use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn two_by_two() -> Vec<Observation> {
    vec![obs(0, "A", 1, 4), obs(1, "A", 2, 2), obs(0, "B", 1, 2), obs(1, "B", 2, 1)]
}

/// Log-likelihood straight from the model definition, independent of the
/// design index.
fn oracle_ll(observations: &[Observation], fit: &FitResult) -> f64 {
    observations
        .iter()
        .map(|o| {
            let Some(p) = fit.p.get(&o.position) else {
                // silent positions only hold zero-vote rows, which contribute 0
                assert!(fit.silent_positions.contains(&o.position) && o.total_votes() == 0);
                return 0.0;
            };
            let mut e = fit.q[&o.article_id] + p;
            if fit.variant.has_age() {
                e += fit.beta_age * o.age_hours;
            }
            if fit.variant.has_score() {
                e += fit.beta_score * (o.displayed_score.max(1) as f64).ln();
            }
            if fit.variant.has_social() {
                e += fit.beta_social * o.displayed_score.max(0) as f64;
            }
            let v = o.total_votes();
            let ln_fact: f64 = (2..=v).map(|k| (k as f64).ln()).sum();
            v as f64 * e - e.exp() - ln_fact
        })
        .sum()
}

fn random_instance(rng: &mut ChaCha8Rng, variant: ModelVariant) -> Vec<Observation> {
    let n_articles = rng.gen_range(2..15);
    let n_positions = rng.gen_range(2..12);
    let mut out = Vec::new();
    for a in 0..n_articles {
        for t in 0..rng.gen_range(2..8) {
            let votes = if variant == ModelVariant::MusicLab {
                rng.gen_range(0..2)
            } else {
                rng.gen_range(0..12)
            };
            out.push(Observation {
                bucket: t,
                article_id: ArticleId::new(format!("a{a}")),
                position: rng.gen_range(1..=n_positions),
                votes_up: votes,
                votes_down: 0,
                displayed_score: rng.gen_range(-3..60),
                age_hours: rng.gen_range(0.0..12.0),
            });
        }
        // make sure every article keeps a vote
        out.last_mut().unwrap().votes_up = 1;
    }
    out
}

#[test]
fn single_observation_likelihood_values() {
    for v in [0, 1] {
        let data = vec![obs(0, "a", 1, v)];
        let design = build_design(&data, ModelVariant::Base, &FitOptions { min_article_votes: 0, drop_separated: false, ..Default::default() })
            .unwrap();
        assert_eq!(design.dim(), 1);
        assert!((log_likelihood(&[0.0], &design) + 1.0).abs() < 1e-15);
    }
}

#[test]
fn likelihood_bounded_by_zero_as_q_diverges() {
    let data = vec![obs(0, "a", 1, 0)];
    let design =
        build_design(&data, ModelVariant::Base, &FitOptions { min_article_votes: 0, drop_separated: false, ..Default::default() }).unwrap();
    let mut last = f64::NEG_INFINITY;
    for q in [0.0, -2.0, -5.0, -20.0] {
        let ll = log_likelihood(&[q], &design);
        assert!(ll < 0.0 && ll > last);
        last = ll;
    }
}

#[test]
fn gradient_zero_at_closed_form_single_cell() {
    let data = vec![obs(0, "a", 1, 2), obs(1, "a", 1, 4), obs(2, "a", 1, 3)];
    let design = build_design(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    let g = gradient(&[3f64.ln()], &design);
    assert!(g[0].abs() < 1e-12);
}

#[test]
fn single_cell_fit_is_log_mean() {
    let data = vec![obs(0, "a", 1, 2), obs(1, "a", 1, 4), obs(2, "a", 1, 3)];
    let fit = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    assert!((fit.q[&ArticleId::from("a")] - 3f64.ln()).abs() < 1e-6);
    assert_eq!(fit.p[&1], 0.0);
}

#[test]
fn two_by_two_margins_closed_form() {
    let fit = fit(&two_by_two(), ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    assert!((fit.q[&ArticleId::from("A")] - 4f64.ln()).abs() < 1e-5);
    assert!((fit.q[&ArticleId::from("B")] - 2f64.ln()).abs() < 1e-5);
    assert!((fit.p[&2] - 0.5f64.ln()).abs() < 1e-5);
    assert_eq!(fit.p[&1], 0.0);
    assert_eq!(fit.reference_position, 1);
    assert!(!fit.diagnostics.rank_deficient);
}

#[test]
fn design_dimension_counts_reference_once() {
    let mut data = two_by_two();
    data.push(obs(2, "C", 1, 3));
    let base = build_design(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert_eq!(base.dim(), 3 + 1);
    let full = build_design(&data, ModelVariant::Full, &FitOptions::default()).unwrap();
    assert_eq!(full.dim(), 3 + 1 + 2);
    let timed = build_design(&data, ModelVariant::BaseTime, &FitOptions::default()).unwrap();
    assert_eq!(timed.dim(), 3 + 1 + 1);
}

#[test]
fn zero_vote_article_is_excluded_and_reported() {
    let mut data = two_by_two();
    data.push(obs(0, "silent", 2, 0));
    data.push(obs(1, "silent", 1, 0));
    let fit = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(!fit.q.contains_key(&ArticleId::from("silent")));
    assert_eq!(fit.diagnostics.excluded.len(), 1);
    assert_eq!(fit.diagnostics.excluded[0].article_id.as_str(), "silent");
}

#[test]
fn everything_excluded_is_an_error() {
    let data = vec![obs(0, "a", 1, 0)];
    assert!(matches!(
        build_design(&data, ModelVariant::Base, &FitOptions::default()),
        Err(Error::EmptyDesign)
    ));
}

#[test]
fn duplicate_bucket_article_rejected() {
    let data = vec![obs(0, "a", 1, 1), obs(0, "a", 2, 3)];
    assert!(matches!(
        build_design(&data, ModelVariant::Base, &FitOptions::default()),
        Err(Error::Malformed(_))
    ));
}

#[test]
fn musiclab_rejects_counts_above_one() {
    let data = vec![obs(0, "a", 1, 2)];
    assert!(build_design(&data, ModelVariant::MusicLab, &FitOptions::default()).is_err());
}

#[test]
fn zero_vote_position_is_silent() {
    let data = vec![obs(0, "A", 1, 3), obs(1, "A", 7, 0), obs(0, "B", 1, 2), obs(1, "B", 2, 1), obs(2, "B", 7, 0)];
    let f = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert_eq!(f.silent_positions, vec![7]);
    assert!(!f.p.contains_key(&7));
    assert_eq!(predict_rate(&f, &ArticleId::from("A"), 7, 0.0, 1).unwrap(), 0.0);
    assert!(predict_rate(&f, &ArticleId::from("A"), 9, 0.0, 1).is_err());
    assert!(f.converged);
}

#[test]
fn explicit_reference_must_be_observed() {
    let opts = FitOptions { reference_position: Some(9), ..Default::default() };
    assert!(matches!(fit(&two_by_two(), ModelVariant::Base, &opts), Err(Error::UnknownPosition(9))));
    let opts = FitOptions { reference_position: Some(2), ..Default::default() };
    let f = fit(&two_by_two(), ModelVariant::Base, &opts).unwrap();
    assert_eq!(f.p[&2], 0.0);
    assert!((f.p[&1] - 2f64.ln()).abs() < 1e-5);
}

#[test]
fn confounded_design_is_flagged() {
    let data = vec![obs(0, "a", 1, 3), obs(1, "a", 1, 5), obs(0, "b", 2, 2), obs(1, "b", 2, 4)];
    let f = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(f.converged);
    assert!(f.diagnostics.rank_deficient);
    assert_eq!(f.diagnostics.components, 2);
    // only the sum q_b + p_2 is identified
    let sum = f.q[&ArticleId::from("b")] + f.p[&2];
    assert!((sum - 3f64.ln()).abs() < 1e-6);
}

#[test]
fn predict_rate_examples() {
    let mut f = fit(&two_by_two(), ModelVariant::Full, &FitOptions::default()).unwrap();
    let a = ArticleId::from("A");
    f.q.insert(a.clone(), 0.0);
    f.p.insert(2, 0.0);
    f.beta_age = 0.0;
    f.beta_score = 0.0;
    assert_eq!(predict_rate(&f, &a, 2, 3.0, 10).unwrap(), 1.0);

    f.q.insert(a.clone(), 1.0);
    f.p.insert(2, -0.5);
    f.beta_age = -0.1;
    f.beta_score = 0.2;
    // S = 3 stands in for e: ln max(S,1) is then ln 3, so use the exact covariate
    let expected = (1.0 - 0.5 - 0.2 + 0.2 * 3f64.ln()).exp();
    assert!((predict_rate(&f, &a, 2, 2.0, 3).unwrap() - expected).abs() < 1e-12);
    assert!(matches!(predict_rate(&f, &a, 7, 0.0, 1), Err(Error::UnknownPosition(7))));
    assert!(predict_rate(&f, &ArticleId::from("nope"), 1, 0.0, 1).is_err());
}

#[test]
fn musiclab_random_world_prediction() {
    let data = vec![obs(0, "s1", 1, 1), obs(0, "s2", 2, 0), obs(1, "s2", 1, 1), obs(1, "s1", 2, 0)];
    let mut f = fit(&data, ModelVariant::MusicLab, &FitOptions::default()).unwrap();
    f.q.insert(ArticleId::from("s1"), 0.0);
    let one = vec![Exposure { user: 0, item: ArticleId::from("s1"), position: 1 }];
    let pred = predict_musiclab_random_world(&f, &one).unwrap();
    assert!((pred[&ArticleId::from("s1")] - 1.0).abs() < 1e-15);

    let exposures = vec![
        Exposure { user: 0, item: ArticleId::from("s1"), position: 2 },
        Exposure { user: 0, item: ArticleId::from("s2"), position: 1 },
        Exposure { user: 1, item: ArticleId::from("s1"), position: 1 },
    ];
    let doubled: Vec<_> = exposures.iter().chain(exposures.iter()).cloned().collect();
    let single = predict_musiclab_random_world(&f, &exposures).unwrap();
    let twice = predict_musiclab_random_world(&f, &doubled).unwrap();
    for (k, v) in &single {
        assert!((twice[k] - 2.0 * v).abs() <= 1e-12 * v.abs());
    }
    let bad = vec![Exposure { user: 0, item: ArticleId::from("zz"), position: 1 }];
    assert!(predict_musiclab_random_world(&f, &bad).is_err());
}

#[test]
fn random_world_prediction_requires_musiclab_fit() {
    let f = fit(&two_by_two(), ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(predict_musiclab_random_world(&f, &[]).is_err());
}

#[test]
fn gradient_matches_finite_differences_of_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for variant in [ModelVariant::Base, ModelVariant::BaseTime, ModelVariant::Full, ModelVariant::MusicLab] {
        for _ in 0..5 {
            let data = random_instance(&mut rng, variant);
            let design = build_design(&data, variant, &FitOptions::default()).unwrap();
            assert!(design.dim() <= 50);
            // the objective covers only the rows the design retained
            let data: Vec<Observation> = design.used_rows.iter().map(|&i| data[i].clone()).collect();
            let params: Vec<f64> = (0..design.dim()).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let analytic = gradient(&params, &design);
            let h = 1e-5;
            for i in 0..params.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[i] += h;
                minus[i] -= h;
                let fp = oracle_ll(&data, &FitResult::from_params(&design, &plus));
                let fm = oracle_ll(&data, &FitResult::from_params(&design, &minus));
                let fd = (fp - fm) / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / fd.abs().max(1.0);
                assert!(rel < 1e-6, "{variant} coord {i}: analytic {} fd {fd}", analytic[i]);
            }
        }
    }
}

#[test]
fn base_fit_matches_margins() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_instance(&mut rng, ModelVariant::Base);
    let f = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(f.converged);
    let mut by_article: BTreeMap<&ArticleId, (f64, f64)> = BTreeMap::new();
    let mut by_position: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for o in &data {
        let mu = predict_rate(&f, &o.article_id, o.position, 0.0, 1).unwrap();
        let e = by_article.entry(&o.article_id).or_default();
        e.0 += o.total_votes() as f64;
        e.1 += mu;
        let e = by_position.entry(o.position).or_default();
        e.0 += o.total_votes() as f64;
        e.1 += mu;
    }
    for (obs, fitted) in by_article.values().chain(by_position.values()) {
        assert!((obs - fitted).abs() <= 1e-4 * obs.max(1.0), "{obs} vs {fitted}");
    }
}

#[test]
fn ridge_shrinks_effects() {
    let plain = fit(&two_by_two(), ModelVariant::Base, &FitOptions::default()).unwrap();
    let shrunk = fit(&two_by_two(), ModelVariant::Base, &FitOptions { ridge: 5.0, ..Default::default() }).unwrap();
    assert!(shrunk.converged);
    let a = ArticleId::from("A");
    assert!(shrunk.q[&a].abs() < plain.q[&a].abs());
}

#[test]
fn max_iterations_reports_non_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = random_instance(&mut rng, ModelVariant::Full);
    let opts = FitOptions { max_iterations: 1, ..Default::default() };
    let f = fit(&data, ModelVariant::Full, &opts).unwrap();
    assert!(!f.converged);
    assert_eq!(f.iterations, 1);
}

#[test]
fn fit_result_json_shape() {
    let f = fit(&two_by_two(), ModelVariant::Base, &FitOptions::default()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&f).unwrap();
    for key in [
        "variant",
        "reference_position",
        "q",
        "p",
        "beta_age",
        "beta_score",
        "beta_social",
        "log_likelihood",
        "converged",
        "iterations",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["variant"], "base");
    assert!(v["p"].get("2").is_some());
    let back: FitResult = serde_json::from_value(v).unwrap();
    assert_eq!(back.q, f.q);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn likelihood_invariant_to_identification_shift(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_instance(&mut rng, ModelVariant::Full);
        let f = fit(&data, ModelVariant::Full, &FitOptions::default()).unwrap();
        let mut shifted = f.clone();
        shifted.q.values_mut().for_each(|q| *q += c);
        shifted.p.values_mut().for_each(|p| *p -= c);
        let a = oracle_ll(&data, &f);
        let b = oracle_ll(&data, &shifted);
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        let design = build_design(&data, ModelVariant::Full, &FitOptions::default()).unwrap();
        let via_design = log_likelihood(&shifted.to_params(&design).unwrap(), &design);
        prop_assert!((via_design - f.log_likelihood).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn fit_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_instance(&mut rng, ModelVariant::BaseTime);
        let a = fit(&data, ModelVariant::BaseTime, &FitOptions::default()).unwrap();
        let b = fit(&data, ModelVariant::BaseTime, &FitOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn converged_fits_meet_tolerance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_instance(&mut rng, ModelVariant::Base);
        let f = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
        let design = build_design(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
        let g = gradient(&f.to_params(&design).unwrap(), &design);
        let norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(f.converged);
        prop_assert!(norm <= 1e-8, "gradient max-norm {}", norm);
    }
}

#[test]
fn separated_rows_are_dropped_and_counted() {
    // C votes only at 3; its zero-vote cell at 1 would push p(3) to +inf.
    let data = vec![obs(0, "A", 1, 4), obs(1, "A", 2, 2), obs(0, "B", 1, 2), obs(1, "B", 2, 1), obs(2, "C", 3, 5), obs(3, "C", 1, 0)];
    let design = build_design(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert_eq!(design.separated_rows, 1);
    assert_eq!(design.used_rows, vec![0, 1, 2, 3, 4]);
    assert_eq!(design.connected_components(), 2);
    let (articles, positions) = design.component_labels();
    assert_eq!(articles[0], articles[1]);
    assert_ne!(articles[0], articles[2]);
    assert_eq!(positions[2], articles[2]);
    let f = fit(&data, ModelVariant::Base, &FitOptions::default()).unwrap();
    assert!(f.q.values().chain(f.p.values()).all(|v| v.is_finite() && v.abs() < 20.0));
    assert!(f.diagnostics.rank_deficient);
    assert_eq!(f.diagnostics.separated_rows, 1);

    let kept = build_design(&data, ModelVariant::Base, &FitOptions { drop_separated: false, ..Default::default() }).unwrap();
    assert_eq!(kept.separated_rows, 0);
    assert_eq!(kept.n_observations(), 6);
}
