use prefixlab::data::{collect, split, synthesize_prompts, Dataset};
use prefixlab::env::{Env, EnvConfig, FidelityDist, PromptConfig};
use prefixlab::probe::{
    train_category_classifier, train_count_regressor, FeatureSpec, ProbeConfig,
};

const T_PREFIX: usize = 8;

fn dataset(cfg: EnvConfig, prompts: &PromptConfig, n_prompts: usize, k: usize, seed: u64) -> (Env, Dataset) {
    let env = Env::new(cfg).unwrap();
    let ps = synthesize_prompts(n_prompts, prompts, seed);
    let ds = collect(&env, &ps, k, seed).unwrap();
    (env, split(ds, [0.7, 0.15, 0.15], seed).unwrap())
}

fn env_cfg(leak: f64, fidelity: Option<f64>) -> EnvConfig {
    let mut cfg = EnvConfig::default();
    cfg.leak_prob = leak;
    if let Some(f) = fidelity {
        cfg.fidelity = FidelityDist::Fixed(f);
    }
    cfg
}

fn count_spearman(leak: f64, fidelity: Option<f64>, seed: u64) -> f64 {
    let (env, ds) = dataset(env_cfg(leak, fidelity), &PromptConfig::uniform(4, 10), 400, 8, seed);
    let spec = FeatureSpec::Histogram { vocab: env.vocab().size() };
    let (_, report) = train_count_regressor::<f64>(&ds, spec, T_PREFIX, &ProbeConfig::default()).unwrap();
    eprintln!("leak {leak} fidelity {fidelity:?}: {report:?}");
    report.spearman
}

fn category_accuracy(leak: f64, seed: u64) -> f64 {
    let (env, ds) = dataset(env_cfg(leak, None), &PromptConfig::fixed_count(1, 10), 600, 8, seed);
    let spec = FeatureSpec::Histogram { vocab: env.vocab().size() };
    let (_, report) = train_category_classifier::<f64>(&ds, spec, T_PREFIX, 10, &ProbeConfig::default()).unwrap();
    assert_eq!(report.correct(), (0..10).map(|i| report.confusion[i][i]).sum::<usize>());
    eprintln!("leak {leak}: accuracy {} over {}", report.accuracy, report.n);
    report.accuracy
}

#[test]
fn full_leak_full_fidelity_encodes_the_count() {
    assert!(count_spearman(1.0, Some(1.0), 1) >= 0.9);
}

#[test]
fn no_leak_fails_to_regress_the_count() {
    assert!(count_spearman(0.0, None, 2).abs() < 0.15);
}

#[test]
fn leakage_ordering() {
    let s: Vec<f64> = [0.0, 0.5, 1.0].iter().map(|&l| count_spearman(l, None, 3)).collect();
    assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
}

#[test]
fn full_leak_reveals_the_category() {
    assert!(category_accuracy(1.0, 4) >= 0.9);
}

#[test]
fn no_leak_classifier_is_at_chance() {
    assert!((category_accuracy(0.0, 5) - 0.1).abs() <= 0.05);
}
