use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use prefixlab::critic::{
    arch_for, load_checkpoint, train_on_dataset, value_score_correlation, write_checkpoint, ExampleSet, TrainConfig,
};
use prefixlab::data::{self, Dataset, Split, MANIFEST_FILE, RECORDS_FILE};
use prefixlab::env::{Env, EnvConfig, Prompt};
use prefixlab::gae::supervised_steps;
use prefixlab::probe::{train_category_classifier, train_count_regressor, FeatureSpec, ProbeConfig};
use prefixlab::report::{comparison_csv, confusion_csv, csv_bytes, CorrelationRow, Plot, Series};
use prefixlab::rng::derive_seed;
use prefixlab::search::{
    compare as compare_reports, evaluate_strategy, postfix_variance as run_postfix, schedule_cost, CriticScorer,
    PrefixScorer, SearchSchedule, Strategy, StrategyReport,
};
use prefixlab::{Critic, Error, Result};

use crate::run::{Outputs, RunConfig};
use crate::Global;

/// Stream for held-out evaluation prompts, distinct from the dataset prompts.
const EVAL_PROMPTS: u64 = 0x6576_616c;
const DEFAULT_SCHEDULE: &str = "8:128,64:2";

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Number of prompts.
    #[arg(long, default_value_t = 2000)]
    prompts: usize,
    /// Rollouts per prompt.
    #[arg(long, default_value_t = 32)]
    rollouts: usize,
}

#[derive(Args, Debug)]
pub struct TrainCriticArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Prefix lengths to probe, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    t_prefix: Vec<usize>,
    /// Probe the critic's prefix embedding instead of token histograms.
    #[arg(long)]
    critic: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectorArg {
    Oracle,
    Critic,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Number of held-out prompts.
    #[arg(long, default_value_t = 500)]
    prompts: usize,
    /// Critic checkpoint; required by critic-guided strategies.
    #[arg(long)]
    critic: Option<PathBuf>,
    /// Take the environment from this dataset's manifest instead of the config.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// `blind`, `bon:N[:oracle|:critic]`, `plan-critic:SCHEDULE` or `softmax:TEMP:SCHEDULE`.
    #[arg(long, conflicts_with = "schedule")]
    strategy: Option<String>,
    /// Schedule such as `8:128,64:2`; a single stage is best-of-N.
    #[arg(long)]
    schedule: Option<String>,
    /// Final selection for a single-stage schedule.
    #[arg(long, value_enum, default_value = "critic")]
    selector: SelectorArg,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Strategy A (default: plan-critic with the configured schedule).
    #[arg(long)]
    a: Option<String>,
    /// Strategy B (default: critic-selected best-of-N at A's token budget).
    #[arg(long)]
    b: Option<String>,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args, Debug)]
pub struct PostfixArgs {
    #[arg(long, default_value_t = 200)]
    prefixes: usize,
    #[arg(long, default_value_t = 200)]
    completions: usize,
    /// Prefix length (default: the sketch length).
    #[arg(long)]
    prefix_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    /// Schedule `cut:width,...`.
    schedule: String,
}

fn split_ratios(run: &RunConfig) -> Result<[f64; 3]> {
    match run.kv.get_list::<f64>("split")? {
        None => Ok([0.8, 0.1, 0.1]),
        Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
        Some(v) => Err(Error::Config(format!("`split` needs 3 ratios, got {}", v.len()))),
    }
}

pub fn gen_data(g: &Global, a: &GenDataArgs) -> Result<()> {
    let run = RunConfig::from_global(g)?;
    let env = Env::new(run.env()?)?;
    let pc = run.prompts(env.config().n_event_categories)?;
    let ratios = split_ratios(&run)?;
    let prompts = data::synthesize_prompts(a.prompts, &pc, run.seed);
    let ds = data::split(data::collect(&env, &prompts, a.rollouts, run.seed)?, ratios, run.seed)?;

    let mut out = run.outputs("gen-data")?;
    out.arg("prompts", a.prompts);
    out.arg("rollouts", a.rollouts);
    data::save(&ds, &run.out)?;
    out.record(RECORDS_FILE)?;
    out.record(MANIFEST_FILE)?;
    out.write("failures.csv", &csv_bytes(&ds.failures)?)?;
    out.finish(&run)?;

    let c = ds.manifest.counts;
    println!(
        "records {} (train {}, val {}, test {}), failures {}, digest {}",
        ds.len(),
        c.train,
        c.val,
        c.test,
        ds.failures.len(),
        ds.digest()?
    );
    Ok(())
}

fn load_dataset(path: &Path, out: &mut Outputs) -> Result<Dataset> {
    let ds = data::load(path)?;
    out.input("records", &path.join(RECORDS_FILE))?;
    Ok(ds)
}

pub fn train_critic(g: &Global, a: &TrainCriticArgs) -> Result<()> {
    let run = RunConfig::from_global(g)?;
    let mut out = run.outputs("train-critic")?;
    let ds = load_dataset(&a.data, &mut out)?;
    let env_cfg = ds.env_config()?;
    let gae = run.gae(env_cfg.steps)?;
    let cfg = TrainConfig::from_kv(&run.kv, gae, run.seed)?;
    let arch = arch_for(&env_cfg).with_kv(&run.kv)?;
    let outcome = train_on_dataset::<f64>(&ds, arch, &cfg)?;

    let mut ckpt = Vec::new();
    write_checkpoint(&outcome.params, &mut ckpt)?;
    out.write("critic.ckpt", &ckpt)?;
    out.write("loss.csv", &csv_bytes(&outcome.curve)?)?;
    let pts = |f: fn(&prefixlab::critic::LossPoint) -> f64| -> Vec<(f64, f64)> {
        outcome.curve.iter().map(|p| (p.step as f64, f(p))).collect()
    };
    let plot = Plot::new("Critic loss", "step", "loss")
        .with(Series::line("train", pts(|p| p.train_loss)))
        .with(Series::line("val", pts(|p| p.val_loss)));
    out.write("loss.svg", plot.to_svg().as_bytes())?;

    let test = ExampleSet::from_split(&ds, Split::Test, env_cfg.n_event_categories)?;
    let mut rows = Vec::new();
    if test.is_empty() {
        eprintln!("warning: empty test split, skipping value/score correlations");
    } else {
        for step in supervised_steps(env_cfg.steps, gae.interval)? {
            let c = value_score_correlation(&test, &outcome.params, step)?;
            rows.push(CorrelationRow::new("critic_value", step, env_cfg.leak_prob, &c));
        }
    }
    out.write("value_corr.csv", &csv_bytes(&rows)?)?;
    out.finish(&run)?;

    println!(
        "best step {} val loss {:.4} (initial {:.4})",
        outcome.best_step, outcome.best_val_loss, outcome.initial_val_loss
    );
    for r in &rows {
        println!("t={:<3} pearson {:.3} spearman {:.3}", r.t_prefix, r.pearson, r.spearman);
    }
    Ok(())
}

fn load_critic(path: &Path, env: &EnvConfig, out: &mut Outputs) -> Result<Critic> {
    let params: Critic = load_checkpoint(path)?;
    let want = arch_for(env);
    let got = params.arch();
    if (got.vocab, got.rows, got.n_categories) != (want.vocab, want.rows, want.n_categories) {
        return Err(Error::Config(format!(
            "critic expects vocab {} rows {} categories {}, environment has {} {} {}",
            got.vocab, got.rows, got.n_categories, want.vocab, want.rows, want.n_categories
        )));
    }
    out.input("critic", path)?;
    Ok(params)
}

#[derive(serde::Serialize)]
struct AccuracyRow {
    t_prefix: usize,
    leak_prob: f64,
    accuracy: f64,
    chance: f64,
    n: usize,
}

pub fn probe(g: &Global, a: &ProbeArgs) -> Result<()> {
    let run = RunConfig::from_global(g)?;
    let mut out = run.outputs("probe")?;
    let ds = load_dataset(&a.data, &mut out)?;
    let env_cfg = ds.env_config()?;
    let pcfg = ProbeConfig::from_kv(&run.kv, run.seed)?;
    let spec = match &a.critic {
        Some(p) => FeatureSpec::CriticEmbedding(load_critic(p, &env_cfg, &mut out)?),
        None => FeatureSpec::Histogram {
            vocab: arch_for(&env_cfg).vocab,
        },
    };
    let features = if a.critic.is_some() { "critic" } else { "histogram" };
    out.arg("features", features);
    out.arg("t_prefix", format!("{:?}", a.t_prefix));

    let n_cat = env_cfg.n_event_categories;
    let chance = 1.0 / n_cat as f64;
    let mut corr = Vec::new();
    let mut acc = Vec::new();
    for &t in &a.t_prefix {
        let (_, c) = train_count_regressor::<f64>(&ds, spec.clone(), t, &pcfg)?;
        corr.push(CorrelationRow::new("event_count", t, env_cfg.leak_prob, &c));
        println!("t_prefix {t}: event count spearman {:.3} kendall {:.3}", c.spearman, c.kendall);
        match train_category_classifier::<f64>(&ds, spec.clone(), t, n_cat, &pcfg) {
            Ok((_, r)) => {
                out.write(&format!("confusion_t{t}.csv"), &confusion_csv(&r)?)?;
                println!("t_prefix {t}: category accuracy {:.3} (chance {chance:.3})", r.accuracy);
                acc.push(AccuracyRow {
                    t_prefix: t,
                    leak_prob: env_cfg.leak_prob,
                    accuracy: r.accuracy,
                    chance,
                    n: r.n,
                });
            }
            Err(Error::Degenerate(m)) => eprintln!("warning: t_prefix {t}: category probe skipped: {m}"),
            Err(e) => return Err(e),
        }
    }
    out.write("correlations.csv", &csv_bytes(&corr)?)?;
    out.write("classification.csv", &csv_bytes(&acc)?)?;
    let plot = Plot::new("Prefix probes", "T_prefix", "score")
        .with(Series::line(
            "event count spearman",
            corr.iter().map(|r| (r.t_prefix as f64, r.spearman)).collect(),
        ))
        .with(Series::line(
            "category accuracy",
            acc.iter().map(|r| (r.t_prefix as f64, r.accuracy)).collect(),
        ));
    out.write("probe.svg", plot.to_svg().as_bytes())?;
    out.finish(&run)
}

/// Parses `blind`, `bon:N[:oracle|:critic]`, `plan-critic:SCHEDULE` or
/// `softmax:TEMP:SCHEDULE`.
pub fn parse_strategy(s: &str) -> Result<Strategy> {
    let bad = || Error::Config(format!("unknown strategy `{s}`"));
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    match head {
        "blind" if rest.is_empty() => Ok(Strategy::Blind),
        "bon" => {
            let (n, sel) = rest.split_once(':').unwrap_or((rest, "oracle"));
            let n: usize = n.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(Error::Config("best-of-N needs N >= 1".into()));
            }
            let oracle = match sel {
                "oracle" => true,
                "critic" => false,
                _ => return Err(bad()),
            };
            Ok(Strategy::BestOfN { n, oracle })
        }
        "plan-critic" => Ok(Strategy::PlanCritic {
            schedule: rest.parse()?,
        }),
        "softmax" => {
            let (t, sched) = rest.split_once(':').ok_or_else(bad)?;
            let temperature: f64 = t.parse().map_err(|_| bad())?;
            Ok(Strategy::SoftmaxResample {
                schedule: sched.parse()?,
                temperature,
            })
        }
        _ => Err(bad()),
    }
}

/// A single-stage schedule is best-of-N with the given selector; anything
/// else is critic-pruned search.
fn schedule_strategy(schedule: &SearchSchedule, steps: usize, selector: SelectorArg) -> Result<Strategy> {
    schedule.validate_for(steps)?;
    match (schedule.stages(), selector) {
        ([only], sel) => Ok(Strategy::BestOfN {
            n: only.width,
            oracle: sel == SelectorArg::Oracle,
        }),
        (_, SelectorArg::Critic) => Ok(Strategy::PlanCritic {
            schedule: schedule.clone(),
        }),
        (_, SelectorArg::Oracle) => Err(Error::Config(
            "multi-stage schedules prune with the critic; use --selector critic".into(),
        )),
    }
}

struct EvalSetup {
    env: Env,
    prompts: Vec<Prompt>,
    critic: Option<Critic>,
    interval: usize,
}

fn eval_setup(run: &RunConfig, a: &EvalArgs, out: &mut Outputs) -> Result<EvalSetup> {
    let env_cfg = match &a.data {
        Some(d) => {
            let ds = load_dataset(d, out)?;
            ds.env_config()?
        }
        None => run.env()?,
    };
    let interval = run.gae(env_cfg.steps)?.interval;
    let pc = run.prompts(env_cfg.n_event_categories)?;
    let critic = a.critic.as_deref().map(|p| load_critic(p, &env_cfg, out)).transpose()?;
    let prompts = data::synthesize_prompts(a.prompts, &pc, derive_seed(run.seed, &[EVAL_PROMPTS]));
    out.arg("prompts", a.prompts);
    Ok(EvalSetup {
        env: Env::new(env_cfg)?,
        prompts,
        critic,
        interval,
    })
}

fn evaluate(setup: &EvalSetup, strategy: &Strategy, seed: u64) -> Result<StrategyReport> {
    if let Strategy::PlanCritic { schedule } | Strategy::SoftmaxResample { schedule, .. } = strategy {
        schedule.validate_for(setup.env.steps())?;
        schedule.check_critic_steps(setup.interval)?;
    }
    let scorer = setup.critic.as_ref().map(|p| CriticScorer {
        params: p,
        interval: setup.interval,
    });
    if strategy.needs_scorer() && scorer.is_none() {
        return Err(Error::Config(format!("strategy {strategy} needs --critic")));
    }
    let report = evaluate_strategy(
        &setup.env,
        strategy,
        scorer.as_ref().map(|s| s as &dyn PrefixScorer),
        &setup.prompts,
        seed,
    )?;
    if !report.empty_buckets.is_empty() {
        eprintln!("warning: {strategy}: no prompts with event count {:?}", report.empty_buckets);
    }
    Ok(report)
}

fn print_summary(r: &StrategyReport) {
    println!("{}: mean {:.3} over {} prompts, {} tokens/row", r.strategy, r.overall_mean, r.rows.len(), r.cost_tokens);
    for b in &r.buckets {
        println!("  events {}: {:.3} (n={})", b.event_count, b.mean, b.n);
    }
}

pub fn sample(g: &Global, a: &SampleArgs) -> Result<()> {
    let run = RunConfig::from_global(g)?;
    let mut out = run.outputs("sample")?;
    let setup = eval_setup(&run, &a.eval, &mut out)?;
    let strategy = match (&a.strategy, &a.schedule) {
        (Some(s), _) => parse_strategy(s)?,
        (None, Some(s)) => schedule_strategy(&s.parse()?, setup.env.steps(), a.selector)?,
        (None, None) => {
            let s = run.kv.raw("schedule").unwrap_or(DEFAULT_SCHEDULE);
            schedule_strategy(&s.parse()?, setup.env.steps(), a.selector)?
        }
    };
    out.arg("strategy", &strategy);
    let report = evaluate(&setup, &strategy, run.seed)?;
    out.write("report.csv", &csv_bytes(&report.rows)?)?;
    out.write("summary.csv", &csv_bytes(&report.summary_rows())?)?;
    out.finish(&run)?;
    print_summary(&report);
    Ok(())
}

pub fn compare(g: &Global, a: &CompareArgs) -> Result<()> {
    let run = RunConfig::from_global(g)?;
    let mut out = run.outputs("compare")?;
    let setup = eval_setup(&run, &a.eval, &mut out)?;
    let steps = setup.env.steps();
    let sa = match &a.a {
        Some(s) => parse_strategy(s)?,
        None => Strategy::PlanCritic {
            schedule: run.kv.raw("schedule").unwrap_or(DEFAULT_SCHEDULE).parse()?,
        },
    };
    let sb = match &a.b {
        Some(s) => parse_strategy(s)?,
        None => Strategy::BestOfN {
            n: sa.cost(steps).div_ceil(steps),
            oracle: false,
        },
    };
    out.arg("a", &sa);
    out.arg("b", &sb);
    let ra = evaluate(&setup, &sa, run.seed)?;
    let rb = evaluate(&setup, &sb, run.seed)?;
    let c = compare_reports(&ra, &rb)?;

    out.write("report_a.csv", &csv_bytes(&ra.rows)?)?;
    out.write("report_b.csv", &csv_bytes(&rb.rows)?)?;
    let mut summary = ra.summary_rows();
    summary.extend(rb.summary_rows());
    out.write("summary.csv", &csv_bytes(&summary)?)?;
    out.write("comparison.csv", &comparison_csv(&c)?)?;
    let by_bucket = |r: &StrategyReport| r.buckets.iter().map(|b| (b.event_count as f64, b.mean)).collect();
    let plot = Plot::new("Mean score by event count", "event count", "score")
        .with(Series::line(&ra.strategy, by_bucket(&ra)))
        .with(Series::line(&rb.strategy, by_bucket(&rb)));
    out.write("buckets.svg", plot.to_svg().as_bytes())?;
    out.finish(&run)?;

    print_summary(&ra);
    print_summary(&rb);
    println!(
        "A−B {:+.3}; wins {} losses {} ties {}; one-sided sign test p = {:.3e}",
        c.mean_a - c.mean_b,
        c.sign.wins,
        c.sign.losses,
        c.sign.ties,
        c.sign.p_value
    );
    Ok(())
}

pub fn postfix_variance(g: &Global, a: &PostfixArgs) -> Result<()> {
    let run = RunConfig::from_global(g)?;
    let env = Env::new(run.env()?)?;
    let pc = run.prompts(env.config().n_event_categories)?;
    let len = a.prefix_len.unwrap_or(env.config().sketch_steps);
    let pv = run_postfix(&env, &pc, a.prefixes, a.completions, len, run.seed)?;

    let mut out = run.outputs("postfix-variance")?;
    out.arg("prefixes", a.prefixes);
    out.arg("completions", a.completions);
    out.arg("prefix_len", len);
    out.write("postfix.csv", &csv_bytes(&pv.rows)?)?;
    #[derive(serde::Serialize)]
    struct Summary {
        prefixes: usize,
        completions: usize,
        prefix_len: usize,
        median_std: f64,
        std_of_means: f64,
        ratio: f64,
    }
    let summary = Summary {
        prefixes: a.prefixes,
        completions: a.completions,
        prefix_len: len,
        median_std: pv.median_std,
        std_of_means: pv.std_of_means,
        ratio: pv.ratio,
    };
    out.write("postfix_summary.csv", &csv_bytes(&[summary])?)?;
    let plot = Plot::new("Completion spread per prefix", "mean score", "std of completions")
        .with(Series::scatter("prefix", pv.rows.iter().map(|r| (r.mean, r.std)).collect()));
    out.write("postfix.svg", plot.to_svg().as_bytes())?;
    out.finish(&run)?;
    println!(
        "median std {:.3}, std of means {:.3}, ratio {:.3}",
        pv.median_std, pv.std_of_means, pv.ratio
    );
    Ok(())
}

pub fn budget(_g: &Global, a: &BudgetArgs) -> Result<()> {
    let schedule: SearchSchedule = a.schedule.parse()?;
    println!("{}", schedule_cost(&schedule));
    Ok(())
}
