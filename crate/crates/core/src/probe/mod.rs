//! Probes from prefix features to global attributes of the full generation.
//!
//! A probe is a one-hidden-layer tanh network trained with Adam, either as a
//! regressor (realized event count) or a softmax classifier (category of a
//! single realized event). Reports are computed on the test split only.

mod correlation;

pub use correlation::{average_ranks, kendall, pearson, spearman, CorrelationReport};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::config::KvConfig;
use crate::critic::{cumulative_feature, CriticParams};
use crate::data::{Dataset, RolloutRecord, Split};
use crate::env::CodeGrid;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_rng, uniform, Rng};
use crate::scalar::Scalar;

/// What a probe sees of a prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec<F> {
    /// Normalized token counts over the prefix, rows summed (width = vocab).
    Histogram { vocab: usize },
    /// The critic's cumulative-mean embedding at the prefix end.
    CriticEmbedding(CriticParams<F>),
}

impl<F: Scalar> FeatureSpec<F> {
    pub fn width(&self) -> usize {
        match self {
            FeatureSpec::Histogram { vocab } => *vocab,
            FeatureSpec::CriticEmbedding(p) => p.arch().width,
        }
    }
}

pub fn prefix_features<F: Scalar>(grid: &CodeGrid, t_prefix: usize, spec: &FeatureSpec<F>) -> Result<Vec<F>> {
    if t_prefix == 0 || t_prefix > grid.width() {
        return Err(Error::StepOutOfRange {
            step: t_prefix,
            max: grid.width(),
        });
    }
    match spec {
        FeatureSpec::Histogram { vocab } => {
            let mut h = vec![F::zero(); *vocab];
            for t in 0..t_prefix {
                for code in grid.column(t) {
                    let slot = h.get_mut(code as usize).ok_or(Error::CodeOutOfRange { code, vocab: *vocab })?;
                    *slot += F::one();
                }
            }
            let total = F::of_usize(t_prefix * grid.n_rows());
            h.iter_mut().for_each(|x| *x /= total);
            Ok(h)
        }
        FeatureSpec::CriticEmbedding(params) => cumulative_feature(grid, t_prefix, params),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

impl Task {
    fn outputs(self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification { classes } => classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 3e-3,
            steps: 2000,
            batch_size: 128,
            eval_every: 200,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub const KEYS: &'static [&'static str] = &[
        "probe_hidden",
        "probe_learning_rate",
        "probe_steps",
        "probe_batch_size",
        "probe_eval_every",
    ];

    pub fn from_kv(kv: &KvConfig, seed: u64) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            hidden: kv.get("probe_hidden", d.hidden)?,
            learning_rate: kv.get("probe_learning_rate", d.learning_rate)?,
            steps: kv.get("probe_steps", d.steps)?,
            batch_size: kv.get("probe_batch_size", d.batch_size)?,
            eval_every: kv.get("probe_eval_every", d.eval_every)?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("probe hidden, steps, batch_size and eval_every must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad probe learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Features and integer targets for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet<F> {
    pub features: Vec<Vec<F>>,
    pub targets: Vec<usize>,
}

impl<F: Scalar> ProbeSet<F> {
    pub fn build<'a>(
        records: impl IntoIterator<Item = &'a RolloutRecord>,
        t_prefix: usize,
        spec: &FeatureSpec<F>,
        target: impl Fn(&RolloutRecord) -> Option<usize>,
    ) -> Result<Self> {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for r in records {
            if let Some(y) = target(r) {
                features.push(prefix_features(&r.grid()?, t_prefix, spec)?);
                targets.push(y);
            }
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// A trained probe. Inputs are standardized with training-set statistics;
/// regression outputs are in target units.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel<F> {
    pub spec: FeatureSpec<F>,
    pub t_prefix: usize,
    pub task: Task,
    pub hidden: usize,
    input_mean: Vec<F>,
    input_scale: Vec<F>,
    target_mean: F,
    target_scale: F,
    /// `w1[hidden × in] | b1[hidden] | w2[out × hidden] | b2[out]`
    params: Vec<F>,
}

impl<F: Scalar> ProbeModel<F> {
    fn inputs(&self) -> usize {
        self.input_mean.len()
    }

    fn split_params(&self) -> (&[F], &[F], &[F], &[F]) {
        let (ni, nh) = (self.inputs(), self.hidden);
        let (w1, rest) = self.params.split_at(nh * ni);
        let (b1, rest) = rest.split_at(nh);
        let (w2, b2) = rest.split_at(self.task.outputs() * nh);
        (w1, b1, w2, b2)
    }

    fn standardize(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    /// Hidden activations and raw outputs for a standardized input.
    fn forward(&self, z: &[F]) -> (Vec<F>, Vec<F>) {
        let (w1, b1, w2, b2) = self.split_params();
        let ni = self.inputs();
        let h: Vec<F> = (0..self.hidden)
            .map(|k| {
                w1[k * ni..(k + 1) * ni]
                    .iter()
                    .zip(z)
                    .fold(b1[k], |acc, (&w, &x)| acc + w * x)
                    .tanh()
            })
            .collect();
        let out = (0..self.task.outputs())
            .map(|o| {
                w2[o * self.hidden..(o + 1) * self.hidden]
                    .iter()
                    .zip(&h)
                    .fold(b2[o], |acc, (&w, &x)| acc + w * x)
            })
            .collect();
        (h, out)
    }

    /// Raw outputs: the regression value or class logits.
    pub fn predict(&self, features: &[F]) -> Result<Vec<F>> {
        if features.len() != self.inputs() {
            return Err(Error::LengthMismatch {
                left: self.inputs(),
                right: features.len(),
            });
        }
        let (_, mut out) = self.forward(&self.standardize(features));
        if self.task == Task::Regression {
            out[0] = out[0] * self.target_scale + self.target_mean;
        }
        Ok(out)
    }

    pub fn predict_class(&self, features: &[F]) -> Result<usize> {
        let logits = self.predict(features)?;
        Ok(argmax(&logits))
    }

    pub fn predict_grid(&self, grid: &CodeGrid) -> Result<Vec<F>> {
        self.predict(&prefix_features(grid, self.t_prefix, &self.spec)?)
    }

    /// Loss and gradient over a batch of standardized inputs. Regression uses
    /// squared error on standardized targets, classification cross-entropy.
    fn loss_and_grad(&self, batch: &[(&[F], usize)]) -> (F, Vec<F>) {
        let (ni, nh, no) = (self.inputs(), self.hidden, self.task.outputs());
        let (_, _, w2, _) = self.split_params();
        let mut grad = vec![F::zero(); self.params.len()];
        let (g1, rest) = grad.split_at_mut(nh * ni);
        let (gb1, rest) = rest.split_at_mut(nh);
        let (g2, gb2) = rest.split_at_mut(no * nh);
        let mut loss = F::zero();
        let inv = F::one() / F::of_usize(batch.len());
        let mut dout = vec![F::zero(); no];
        for &(z, y) in batch {
            let (h, out) = self.forward(z);
            match self.task {
                Task::Regression => {
                    let t = (F::of_usize(y) - self.target_mean) / self.target_scale;
                    let d = out[0] - t;
                    loss += d * d * inv;
                    dout[0] = F::of(2.0) * d * inv;
                }
                Task::Classification { .. } => {
                    let p = softmax(&out);
                    loss -= p[y].max(F::of(1e-300)).ln() * inv;
                    for o in 0..no {
                        let target = if o == y { F::one() } else { F::zero() };
                        dout[o] = (p[o] - target) * inv;
                    }
                }
            }
            for o in 0..no {
                gb2[o] += dout[o];
                for k in 0..nh {
                    g2[o * nh + k] += dout[o] * h[k];
                }
            }
            for k in 0..nh {
                let dh = (0..no).fold(F::zero(), |acc, o| acc + dout[o] * w2[o * nh + k]);
                let dz = dh * (F::one() - h[k] * h[k]);
                gb1[k] += dz;
                for (g, &x) in g1[k * ni..(k + 1) * ni].iter_mut().zip(z) {
                    *g += dz * x;
                }
            }
        }
        (loss, grad)
    }
}

fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s = e.iter().copied().sum::<F>();
    e.into_iter().map(|x| x / s).collect()
}

fn moments<F: Scalar>(xs: impl Iterator<Item = F> + Clone) -> (F, F) {
    let n = F::of_usize(xs.clone().count());
    let mean = xs.clone().sum::<F>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<F>() / n;
    (mean, var.sqrt())
}

fn init_model<F: Scalar>(
    spec: FeatureSpec<F>,
    t_prefix: usize,
    task: Task,
    train: &ProbeSet<F>,
    cfg: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeModel<F>> {
    let ni = spec.width();
    if train.features.iter().any(|x| x.len() != ni) {
        return Err(Error::LengthMismatch {
            left: ni,
            right: train.features.iter().map(Vec::len).find(|&l| l != ni).unwrap_or(ni),
        });
    }
    let mut input_mean = Vec::with_capacity(ni);
    let mut input_scale = Vec::with_capacity(ni);
    for j in 0..ni {
        let (m, s) = moments(train.features.iter().map(|x| x[j]));
        input_mean.push(m);
        // Constant inputs are centred and left unscaled.
        input_scale.push(if s > F::of(1e-12) { s } else { F::one() });
    }
    let (target_mean, target_scale) = match task {
        Task::Regression => {
            let (m, s) = moments(train.targets.iter().map(|&y| F::of_usize(y)));
            if s == F::zero() {
                return Err(Error::Degenerate("regression targets are constant".into()));
            }
            (m, s)
        }
        Task::Classification { .. } => (F::zero(), F::one()),
    };
    let (nh, no) = (cfg.hidden, task.outputs());
    let b1_limit = (6.0 / (ni + nh) as f64).sqrt();
    let b2_limit = (6.0 / (nh + no) as f64).sqrt();
    let mut params = Vec::with_capacity(nh * ni + nh + no * nh + no);
    params.extend((0..nh * ni).map(|_| F::of(uniform(rng, -b1_limit, b1_limit))));
    params.extend((0..nh).map(|_| F::zero()));
    params.extend((0..no * nh).map(|_| F::of(uniform(rng, -b2_limit, b2_limit))));
    params.extend((0..no).map(|_| F::zero()));
    Ok(ProbeModel {
        spec,
        t_prefix,
        task,
        hidden: nh,
        input_mean,
        input_scale,
        target_mean,
        target_scale,
        params,
    })
}

/// Trains a probe on `train`, keeping the parameters with the lowest loss on
/// `val`.
pub fn fit<F: Scalar>(
    spec: FeatureSpec<F>,
    t_prefix: usize,
    task: Task,
    train: &ProbeSet<F>,
    val: &ProbeSet<F>,
    cfg: &ProbeConfig,
) -> Result<ProbeModel<F>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Degenerate("probe train and validation sets must be non-empty".into()));
    }
    if let Task::Classification { classes } = task {
        if let Some(&y) = train.targets.iter().chain(&val.targets).find(|&&y| y >= classes) {
            return Err(Error::Degenerate(format!("class {y} out of range for {classes} classes")));
        }
    }
    let mut rng = derive_rng(cfg.seed, &[0x7072_6f62_65]);
    let mut model = init_model(spec, t_prefix, task, train, cfg, &mut rng)?;
    let train_z: Vec<Vec<F>> = train.features.iter().map(|x| model.standardize(x)).collect();
    let val_z: Vec<Vec<F>> = val.features.iter().map(|x| model.standardize(x)).collect();
    let val_batch: Vec<(&[F], usize)> = val_z.iter().map(Vec::as_slice).zip(val.targets.iter().copied()).collect();
    let mut adam = Adam::new(
        model.params.len(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut best = (model.params.clone(), model.loss_and_grad(&val_batch).0);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 1..=cfg.steps {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..train.len());
            batch.push((train_z[i].as_slice(), train.targets[i]));
        }
        let (loss, grad) = model.loss_and_grad(&batch);
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        adam.step(&mut model.params, &grad);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let val_loss = model.loss_and_grad(&val_batch).0;
            if !val_loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            if val_loss <= best.1 {
                best = (model.params.clone(), val_loss);
            }
        }
    }
    model.params = best.0;
    Ok(model)
}

/// Accuracy and confusion matrix (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

impl ClassificationReport {
    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }
}

pub fn evaluate_regressor<F: Scalar>(model: &ProbeModel<F>, test: &ProbeSet<F>) -> Result<CorrelationReport> {
    let pred = test
        .features
        .iter()
        .map(|x| model.predict(x).map(|o| o[0]))
        .collect::<Result<Vec<F>>>()?;
    let truth: Vec<F> = test.targets.iter().map(|&y| F::of_usize(y)).collect();
    CorrelationReport::compute(&pred, &truth)
}

pub fn evaluate_classifier<F: Scalar>(model: &ProbeModel<F>, test: &ProbeSet<F>) -> Result<ClassificationReport> {
    let classes = model.task.outputs();
    let mut confusion = vec![vec![0; classes]; classes];
    for (x, &y) in test.features.iter().zip(&test.targets) {
        confusion[y][model.predict_class(x)?] += 1;
    }
    let n = test.len();
    let correct: usize = (0..classes).map(|i| confusion[i][i]).sum();
    Ok(ClassificationReport {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        confusion,
        n,
    })
}

fn sets<F: Scalar>(
    ds: &Dataset,
    t_prefix: usize,
    spec: &FeatureSpec<F>,
    target: impl Fn(&RolloutRecord) -> Option<usize> + Copy,
) -> Result<[ProbeSet<F>; 3]> {
    let build = |s: Split| ProbeSet::build(ds.in_split(s), t_prefix, spec, target);
    Ok([build(Split::Train)?, build(Split::Val)?, build(Split::Test)?])
}

/// Regresses the realized (decoded) event count from the prefix.
pub fn train_count_regressor<F: Scalar>(
    ds: &Dataset,
    spec: FeatureSpec<F>,
    t_prefix: usize,
    cfg: &ProbeConfig,
) -> Result<(ProbeModel<F>, CorrelationReport)> {
    let [train, val, test] = sets(ds, t_prefix, &spec, |r| Some(r.realized_events.len()))?;
    let model = fit(spec, t_prefix, Task::Regression, &train, &val, cfg)?;
    let report = evaluate_regressor(&model, &test)?;
    Ok((model, report))
}

/// Label of a single-event record: its one decoded category. Records with a
/// multi-event prompt or no decoded event are skipped.
pub fn single_event_label(r: &RolloutRecord) -> Option<usize> {
    match (r.prompt_events.len(), r.realized_events.as_slice()) {
        (1, [c]) => Some(*c),
        _ => None,
    }
}

/// Classifies the realized category of single-event generations.
pub fn train_category_classifier<F: Scalar>(
    ds: &Dataset,
    spec: FeatureSpec<F>,
    t_prefix: usize,
    n_categories: usize,
    cfg: &ProbeConfig,
) -> Result<(ProbeModel<F>, ClassificationReport)> {
    let [train, val, test] = sets(ds, t_prefix, &spec, single_event_label)?;
    let mut seen = vec![false; n_categories];
    for &y in &train.targets {
        if y < n_categories {
            seen[y] = true;
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::Degenerate(format!("category {c} is absent from the train split")));
    }
    let model = fit(spec, t_prefix, Task::Classification { classes: n_categories }, &train, &val, cfg)?;
    let report = evaluate_classifier(&model, &test)?;
    Ok((model, report))
}

/// Returns a copy of `set` with targets permuted by a seeded shuffle.
pub fn shuffled_targets<F: Scalar>(set: &ProbeSet<F>, seed: u64) -> ProbeSet<F> {
    let mut out = set.clone();
    out.targets.shuffle(&mut derive_rng(seed, &[0x7368_7566]));
    out
}
