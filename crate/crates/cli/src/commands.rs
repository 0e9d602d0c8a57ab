use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, ensure, Context, Result};
use qualrank_core::estimator::{fit, FitOptions, FitResult, ModelVariant, Observation};
use qualrank_core::evaluation::{
    final_scores_from_observations, initial_position_analysis, model_comparison, quality_popularity_report,
    CohortRule, CvOptions, MetricsReport,
};
use qualrank_core::ingest::{
    apply_inclusion_filters, default_base_time, defuzz_exact, log_to_raw, parse_observations, run_fuzz_benchmark,
    to_observations, write_observations, FuzzBenchmark, KnnRegressor,
};
use qualrank_core::quality::{
    compute_vote_ratios, normalized_log_score, position_bias_curve, quality_scores, view_estimates, QualityReport,
    VoteRatios,
};
use qualrank_core::ranking::RankingRule;
use qualrank_core::sim::{run_aggregator_sim, run_musiclab_sim, MusicLabLog, SimConfig, SimMode, TruthSpec};
use qualrank_core::Mode;
use serde::Serialize;
use serde_json::Value;

use crate::cli::{
    CohortArgs, DefuzzArgs, EvaluateArgs, FitArgs, Global, InputArgs, QualityArgs, ReportArgs, Rule, SimKind,
    SimulateArgs,
};
use crate::config::{
    load_overlay, overlay, overlay_mode, CohortConfig, DefuzzConfig, EvaluateConfig, FitConfig, InputConfig,
    QualityConfig, ReportConfig, SimulateConfig,
};
use crate::output::{ensure_dir, mean_sd, num, svg, text, write_json, Plot, Table};

/// Exit status for a fit that stopped short of the tolerance.
pub const EXIT_NOT_CONVERGED: u8 = 3;

fn echo_config<T: Serialize>(g: &Global, command: &str, config: &T) -> Result<()> {
    write_json(&g.out_dir.join(format!("{command}.config.json")), config)
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Defaults for `mode` (flag, then config file, then HN), overlaid with the
/// file's `input` section and the input flags.
fn resolve_input(args: &InputArgs, file: &Value) -> Result<InputConfig> {
    let mode = match args.mode {
        Some(m) => m,
        None => overlay_mode(file, "/input/mode")?.unwrap_or(Mode::Hn),
    };
    let mut input = match file.get("input") {
        Some(section) => overlay(InputConfig::for_mode(mode), section)?,
        None => InputConfig::for_mode(mode),
    };
    input.mode = mode;
    if args.no_filter {
        input.apply_filter = false;
    }
    set(&mut input.filter.max_age_hours, args.max_age_hours);
    set(&mut input.filter.bucket_len_minutes, args.bucket_minutes);
    input.filter.validate()?;
    Ok(input)
}

/// Parse, filter and difference an observation file.
fn load_observations(path: &Path, input: &InputConfig) -> Result<Vec<Observation>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let raw = parse_observations(BufReader::new(file), input.mode)
        .with_context(|| format!("reading {}", path.display()))?;
    let obs = if input.apply_filter {
        let (obs, report) = apply_inclusion_filters(&raw, &input.filter);
        eprintln!(
            "filters: kept {} observations from {} snapshots (excluded: window {}, position {}, age {}, too few {}, unpaired {})",
            obs.len(),
            raw.len(),
            report.time_window,
            report.position,
            report.age,
            report.min_observations,
            report.unpaired
        );
        obs
    } else {
        to_observations(&raw, input.filter.bucket_len_minutes).0
    };
    if obs.is_empty() {
        bail!("{} yields no observations", path.display());
    }
    Ok(obs)
}

fn read_fit(path: &Path) -> Result<FitResult> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("reading fit {}", path.display()))
}

/// Vote shares of the fitted articles (articles without votes have none).
fn fitted_ratios(fit: &FitResult, observations: &[Observation]) -> Result<VoteRatios> {
    let voted: Vec<Observation> = observations.iter().filter(|o| fit.q.contains_key(&o.article_id)).cloned().collect();
    Ok(compute_vote_ratios(&voted)?)
}

fn quality_table(report: &QualityReport, fit: &FitResult) -> Table {
    let mut t = Table::new("quality", &["article_id", "quality", "quantile", "q"]);
    for (id, &quality) in &report.quality {
        t.push(vec![text(id.as_str()), num(quality), num(report.quantile[id]), num(fit.q[id])]);
    }
    t
}

pub fn simulate(g: &Global, args: &SimulateArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    let file_seed = file.pointer("/sim/seed").and_then(Value::as_u64);
    let seed = g.seed.or(file_seed).ok_or_else(|| anyhow!("--seed is required for simulate"))?;
    let mut cfg = overlay(SimulateConfig { sim: SimConfig::default(), truth: TruthSpec::default() }, &file)?;
    let s = &mut cfg.sim;
    s.seed = seed;
    if let Some(kind) = args.mode {
        s.mode = match kind {
            SimKind::Aggregator => SimMode::Aggregator,
            SimKind::Musiclab => SimMode::MusicLab,
        };
    }
    if let Some(rule) = args.rule {
        s.rule = match rule {
            Rule::Hn => RankingRule::hn(0.0),
            Rule::Reddit => RankingRule::reddit(),
        };
    }
    set(&mut s.n_articles, args.articles);
    set(&mut s.n_ticks, args.ticks);
    set(&mut s.users_per_tick, args.users_per_tick);
    set(&mut s.initial_upvotes, args.initial_upvotes);
    set(&mut s.bucket_len_minutes, args.bucket_minutes);
    if let Some(worlds) = args.worlds {
        if worlds < 2 {
            bail!("--worlds counts the random world too, so it must be at least 2");
        }
        s.n_social_worlds = worlds - 1;
        s.include_random_world = true;
    }
    let t = &mut cfg.truth;
    set(&mut t.view_decay, args.view_decay);
    set(&mut t.positions, args.positions);
    set(&mut t.max_quality, args.max_quality);
    set(&mut t.social_weight, args.social_weight);
    set(&mut t.age_decay, args.age_decay);
    if let Some(range) = &args.downvotes {
        ensure!(range.len() == 2, "--downvotes takes LO,HI");
        t.downvote_range = Some((range[0], range[1]));
    }
    cfg.sim.validate()?;

    ensure_dir(&g.out_dir)?;
    echo_config(g, "simulate", &cfg)?;
    let truth = cfg.truth.draw(&cfg.sim.article_ids(), seed);
    write_json(&g.out_dir.join("truth.json"), &truth)?;
    match cfg.sim.mode {
        SimMode::Aggregator => {
            let log = run_aggregator_sim(&cfg.sim, &truth)?;
            let raw = log_to_raw(&log, default_base_time());
            let path = g.out_dir.join("observations.jsonl");
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_observations(std::io::BufWriter::new(file), &raw)?;
            let mut finals = Table::new("final_scores", &["article_id", "final_score", "upvotes", "downvotes"]);
            for (id, &score) in &log.final_scores {
                let (up, down) = log.final_tallies[id];
                finals.push(vec![text(id.as_str()), Value::from(score), Value::from(up), Value::from(down)]);
            }
            finals.write(&g.out_dir, g.format)?;
            println!("simulated {} articles: {} snapshots in {}", cfg.sim.n_articles, raw.len(), path.display());
        }
        SimMode::MusicLab => {
            let log = run_musiclab_sim(&cfg.sim, &truth)?;
            write_json(&g.out_dir.join("musiclab.json"), &log)?;
            let mut downloads = Table::new("downloads", &["world", "random_world", "item", "downloads"]);
            for (w, per_item) in log.downloads.iter().enumerate() {
                for (item, &d) in per_item {
                    let random = log.random_world == Some(w as u32);
                    downloads.push(vec![Value::from(w), Value::from(random), text(item.as_str()), Value::from(d)]);
                }
            }
            downloads.write(&g.out_dir, g.format)?;
            println!("simulated {} worlds with {} user-item records", log.downloads.len(), log.records.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn fit_cmd(g: &Global, args: &FitArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    let input = resolve_input(&args.input, &file)?;
    let mut cfg = overlay(FitConfig { input: input.clone(), variant: ModelVariant::Full, fit: FitOptions::default() }, &file)?;
    cfg.input = input;
    set(&mut cfg.variant, args.variant);
    if args.reference_position.is_some() {
        cfg.fit.reference_position = args.reference_position;
    }
    set(&mut cfg.fit.max_iterations, args.max_iterations);
    set(&mut cfg.fit.ridge, args.ridge);

    let observations = if cfg.variant == ModelVariant::MusicLab {
        let path = &args.input.observations;
        let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
        let log: MusicLabLog =
            serde_json::from_reader(reader).with_context(|| format!("{} is not a MusicLab log", path.display()))?;
        log.social_observations()
    } else {
        load_observations(&args.input.observations, &cfg.input)?
    };
    ensure_dir(&g.out_dir)?;
    echo_config(g, "fit", &cfg)?;
    let result = fit(&observations, cfg.variant, &cfg.fit)?;
    let path = g.out_dir.join("fit.json");
    write_json(&path, &result)?;

    let d = &result.diagnostics;
    println!(
        "{} fit: {} after {} iterations, log-likelihood {:.6}, gradient max-norm {:.2e}",
        result.variant,
        if result.converged { "converged" } else { "NOT converged" },
        result.iterations,
        result.log_likelihood,
        d.grad_max_norm
    );
    println!(
        "{} observations, {} articles ({} excluded), {} positions ({} silent), {} separated rows, {} component(s)",
        d.n_observations,
        result.q.len(),
        d.excluded.len(),
        result.p.len(),
        result.silent_positions.len(),
        d.separated_rows,
        d.components
    );
    if result.variant.has_age() {
        println!("beta_age {:.6}", result.beta_age);
    }
    if result.variant.has_score() {
        println!("beta_score {:.6}", result.beta_score);
    }
    if result.variant.has_social() {
        println!("beta_social {:.6}", result.beta_social);
    }
    let curve = position_bias_curve(&result);
    if curve.non_monotone {
        let rise = curve
            .points
            .windows(2)
            .max_by(|a, b| (a[1].1 / a[0].1).total_cmp(&(b[1].1 / b[0].1)))
            .map(|w| format!(" (largest rise: position {} -> {}, x{:.3})", w[0].0, w[1].0, w[1].1 / w[0].1))
            .unwrap_or_default();
        println!("diagnostic: view rate exp(p) is not monotone in position{rise}");
    }
    println!("wrote {}", path.display());
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NOT_CONVERGED) })
}

pub fn quality(g: &Global, args: &QualityArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    let fit = read_fit(&args.fit)?;
    let mode = match args.mode {
        Some(m) => m,
        None => overlay_mode(&file, "/input/mode")?.unwrap_or(Mode::Hn),
    };
    let mut cfg = overlay(QualityConfig { input: InputConfig::for_mode(mode) }, &file)?;
    cfg.input.mode = mode;
    if args.no_filter {
        cfg.input.apply_filter = false;
    }
    let ratios = match mode {
        Mode::Hn => None,
        Mode::Reddit => {
            let path = args.observations.as_deref().ok_or_else(|| anyhow!("Reddit quality needs --observations"))?;
            Some(fitted_ratios(&fit, &load_observations(path, &cfg.input)?)?)
        }
    };
    let report = quality_scores(&fit, ratios.as_ref(), mode)?;
    ensure_dir(&g.out_dir)?;
    echo_config(g, "quality", &cfg)?;
    let path = quality_table(&report, &fit).write(&g.out_dir, g.format)?;
    println!("quality for {} articles in {}", report.quality.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

/// Mean and sample sd over the folds with defined metrics.
fn fold_summary(per_fold: &[Option<MetricsReport>]) -> Option<(MetricsReport, MetricsReport)> {
    let defined: Vec<&MetricsReport> = per_fold.iter().flatten().collect();
    if defined.is_empty() {
        return None;
    }
    let n = defined.len() as f64;
    let stat = |f: fn(&MetricsReport) -> f64| {
        let mean = defined.iter().map(|m| f(m)).sum::<f64>() / n;
        let sd = if defined.len() < 2 {
            0.0
        } else {
            (defined.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        (mean, sd)
    };
    let (r2, mae, mse) = (stat(|m| m.r2), stat(|m| m.mae), stat(|m| m.mse));
    Some((
        MetricsReport { r2: r2.0, mae: mae.0, mse: mse.0, n: defined.len() },
        MetricsReport { r2: r2.1, mae: mae.1, mse: mse.1, n: defined.len() },
    ))
}

type Metric = (&'static str, fn(&MetricsReport) -> f64);

const METRICS: [Metric; 3] = [("r2", |m| m.r2), ("mae", |m| m.mae), ("mse", |m| m.mse)];

pub fn evaluate(g: &Global, args: &EvaluateArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    let input = resolve_input(&args.input, &file)?;
    let defaults = EvaluateConfig {
        input: input.clone(),
        k: 5,
        seed: 0,
        variants: vec![ModelVariant::Base, ModelVariant::BaseTime, ModelVariant::Full],
        variant: ModelVariant::Full,
        fit: FitOptions::default(),
    };
    let mut cfg = overlay(defaults, &file)?;
    cfg.input = input;
    set(&mut cfg.k, args.k);
    set(&mut cfg.seed, g.seed);
    set(&mut cfg.variants, args.variants.clone());
    set(&mut cfg.variant, args.variant);
    if cfg.variants.is_empty() {
        bail!("--variants must name at least one variant");
    }
    if cfg.variants.contains(&ModelVariant::MusicLab) || cfg.variant == ModelVariant::MusicLab {
        bail!("evaluate works on ranked-list observations; the musiclab variant is not supported");
    }

    let observations = load_observations(&args.input.observations, &cfg.input)?;
    ensure_dir(&g.out_dir)?;
    echo_config(g, "evaluate", &cfg)?;
    let mut all = cfg.variants.clone();
    if !all.contains(&cfg.variant) {
        all.push(cfg.variant);
    }
    let opts = CvOptions { k: cfg.k, seed: cfg.seed, fit: cfg.fit.clone(), mode: cfg.input.mode };
    let comparison = model_comparison(&observations, &all, &opts)?;
    let row = |v: ModelVariant| comparison.rows.iter().find(|r| r.variant == v).expect("variant was evaluated");

    let main = &row(cfg.variant).report;
    let score = main.score_per_fold.as_deref().and_then(fold_summary);
    let mut headers = vec!["metric", "votes"];
    if score.is_some() {
        headers.push("score");
    }
    let mut accuracy = Table::new("accuracy", &headers);
    for (name, f) in METRICS {
        let mut cells = vec![text(name), mean_sd(f(&main.mean), f(&main.sd))];
        if let Some((mean, sd)) = &score {
            cells.push(mean_sd(f(mean), f(sd)));
        }
        accuracy.push(cells);
    }

    let names: Vec<String> = cfg.variants.iter().map(|v| v.to_string()).collect();
    let mut headers: Vec<&str> = vec!["metric"];
    headers.extend(names.iter().map(String::as_str));
    let mut table = Table::new("model_comparison", &headers);
    for (name, f) in METRICS {
        let mut cells = vec![text(name)];
        cells.extend(cfg.variants.iter().map(|&v| mean_sd(f(&row(v).report.mean), f(&row(v).report.sd))));
        table.push(cells);
    }
    let mut cells = vec![text("non_monotone_positions")];
    cells.extend(cfg.variants.iter().map(|&v| Value::from(row(v).non_monotone_positions)));
    table.push(cells);
    let mut cells = vec![text("unscored_rows")];
    cells.extend(
        cfg.variants
            .iter()
            .map(|&v| Value::from(row(v).report.coverage.iter().map(|c| c.dropped + c.unidentified).sum::<usize>())),
    );
    table.push(cells);

    accuracy.write(&g.out_dir, g.format)?;
    table.write(&g.out_dir, g.format)?;
    println!("{}-fold cross-validation on {} observations", cfg.k, observations.len());
    print_table(&accuracy);
    print_table(&table);
    Ok(ExitCode::SUCCESS)
}

fn print_table(t: &Table) {
    let cells: Vec<Vec<String>> = std::iter::once(t.headers.clone())
        .chain(t.rows.iter().map(|r| r.iter().map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string)).collect()))
        .collect();
    let widths: Vec<usize> =
        (0..t.headers.len()).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    println!("{}:", t.name);
    for r in cells {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        println!("  {}", line.join("  ").trim_end());
    }
}

pub fn defuzz(g: &Global, args: &DefuzzArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    ensure_dir(&g.out_dir)?;
    if let (Some(score), Some(ratio)) = (args.score, args.ratio) {
        let (up, down) = defuzz_exact(score, ratio)?;
        println!("upvotes {up} downvotes {down}");
        let mut t = Table::new("defuzz", &["score", "ratio", "upvotes", "downvotes"]);
        t.push(vec![Value::from(score), num(ratio), Value::from(up), Value::from(down)]);
        t.write(&g.out_dir, g.format)?;
        return Ok(ExitCode::SUCCESS);
    }
    if !args.benchmark {
        bail!("give --score and --ratio, or --benchmark");
    }
    let mut cfg = overlay(DefuzzConfig { benchmark: FuzzBenchmark::default() }, &file)?;
    set(&mut cfg.benchmark.seed, g.seed);
    set(&mut cfg.benchmark.n, args.samples);
    set(&mut cfg.benchmark.k, args.k);
    echo_config(g, "defuzz", &cfg)?;
    let report = run_fuzz_benchmark(&cfg.benchmark, &mut KnnRegressor::new(cfg.benchmark.k))?;
    let mut t = Table::new("defuzz_benchmark", &["n_train", "n_test", "r2", "r2_raw"]);
    t.push(vec![Value::from(report.n_train), Value::from(report.n_test), num(report.r2), num(report.r2_raw)]);
    t.write(&g.out_dir, g.format)?;
    println!("k-NN de-fuzzing: r2 {:.4} on {} held-out articles (fuzzed counts as-is: {:.4})", report.r2, report.n_test, report.r2_raw);
    Ok(ExitCode::SUCCESS)
}

pub fn cohort(g: &Global, args: &CohortArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    let input = resolve_input(&args.input, &file)?;
    let mut cfg = overlay(CohortConfig { input: input.clone(), page_size: 30, rule: CohortRule::default() }, &file)?;
    cfg.input = input;
    set(&mut cfg.page_size, args.page_size);
    if let Some(s) = args.entry_score {
        cfg.rule.entry_score = (s >= 0).then_some(s);
    }
    set(&mut cfg.rule.max_entry_age_minutes, args.max_entry_age_minutes);
    let observations = load_observations(&args.input.observations, &cfg.input)?;
    ensure_dir(&g.out_dir)?;
    echo_config(g, "cohort", &cfg)?;
    let finals = final_scores_from_observations(&observations);
    let pages = initial_position_analysis(&observations, &finals, &cfg.rule, cfg.page_size)?;
    let mut t = Table::new("cohort", &["page", "count", "median_final_score", "mean_final_score"]);
    for p in &pages {
        t.push(vec![Value::from(p.page), Value::from(p.count), num(p.median_final_score), num(p.mean_final_score)]);
    }
    t.write(&g.out_dir, g.format)?;
    print_table(&t);
    Ok(ExitCode::SUCCESS)
}

pub fn report(g: &Global, args: &ReportArgs) -> Result<ExitCode> {
    let file = load_overlay(g.config.as_deref())?;
    let input = resolve_input(&args.input, &file)?;
    let mut cfg = overlay(ReportConfig { input: input.clone(), dataset: None, figures: true }, &file)?;
    cfg.input = input;
    if args.dataset.is_some() {
        cfg.dataset = args.dataset.clone();
    }
    if args.no_figures {
        cfg.figures = false;
    }
    let dataset = cfg.dataset.clone().unwrap_or_else(|| {
        args.input.observations.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    });

    let fit = read_fit(&args.fit)?;
    if fit.variant == ModelVariant::MusicLab {
        bail!("report needs a fit of ranked-list observations, not a musiclab fit");
    }
    let observations = load_observations(&args.input.observations, &cfg.input)?;
    let mode = cfg.input.mode;
    let ratios = match mode {
        Mode::Hn => None,
        Mode::Reddit => Some(fitted_ratios(&fit, &observations)?),
    };
    let quality = quality_scores(&fit, ratios.as_ref(), mode)?;
    let curve = position_bias_curve(&fit);
    let finals = final_scores_from_observations(&observations);
    let views = view_estimates(&fit, &observations)
        .context("the observations do not match the fit; use the filter settings the fit was made with")?;
    let corr = quality_popularity_report(&quality, &finals, &views)?;
    // scores below 1 (possible on Reddit) sit at the bottom of the log scale
    let fitted_finals: BTreeMap<_, i64> =
        finals.iter().filter(|(id, _)| fit.q.contains_key(*id)).map(|(id, &s)| (id.clone(), s.max(1))).collect();
    let log_scores = normalized_log_score(&fitted_finals)?;

    ensure_dir(&g.out_dir)?;
    echo_config(g, "report", &cfg)?;
    let mut written = vec![quality_table(&quality, &fit).write(&g.out_dir, g.format)?];

    let mut bias = Table::new("position_bias", &["position", "p", "view_rate"]);
    for &(pos, rate) in &curve.points {
        bias.push(vec![Value::from(pos), num(fit.p[&pos]), num(rate)]);
    }
    for &pos in &fit.silent_positions {
        bias.push(vec![Value::from(pos), Value::Null, num(0.0)]);
    }
    bias.rows.sort_by_key(|r| r[0].as_u64());
    written.push(bias.write(&g.out_dir, g.format)?);

    let mut spearman = Table::new("spearman", &["dataset", "score_corr", "views_corr", "n"]);
    spearman.push(vec![text(dataset.as_str()), num(corr.score_corr), num(corr.views_corr), Value::from(corr.n)]);
    written.push(spearman.write(&g.out_dir, g.format)?);

    let mut scatter = Table::new("scatter", &["article_id", "quality_quantile", "normalized_log_score"]);
    let mut points = Vec::new();
    for (id, &quantile) in &quality.quantile {
        let score = log_scores.get(id).copied().unwrap_or(f64::NAN);
        scatter.push(vec![text(id.as_str()), num(quantile), num(score)]);
        points.push((quantile, score));
    }
    written.push(scatter.write(&g.out_dir, g.format)?);

    if cfg.figures {
        let line: Vec<(f64, f64)> = curve.points.iter().map(|&(p, r)| (p as f64, r)).collect();
        let bias_svg = svg("Position bias", "position", "relative view rate", &line, Plot::Line);
        let scatter_svg = svg(&format!("{dataset}: quality vs score"), "quality quantile", "normalized log score", &points, Plot::Scatter);
        for (name, body) in [("position_bias.svg", bias_svg), ("scatter.svg", scatter_svg)] {
            let path = g.out_dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
    }
    println!(
        "{dataset}: spearman(quality, score) {:.3}, spearman(quality, views) {:.3} over {} articles",
        corr.score_corr, corr.views_corr, corr.n
    );
    if curve.non_monotone {
        println!("diagnostic: view rate exp(p) is not monotone in position");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
