//! Adam, kin-pair sampling, leave-one-pair-out folds and the training loop.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::layers::Tensor;
use crate::net::{contrastive_loss, embedding_distance, signal_tensor, ModelConfig, ModelParams};
use crate::registry::{Registry, Relation};
use crate::rppg::RppgSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 30,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 200,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return bad("val_fraction must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// First and second moments per parameter tensor plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Self { m: zeros(), v: zeros(), t: 0 }
    }
}

/// Bias-corrected Adam update. `names` label tensors in error messages.
pub fn adam_step(
    params: &mut [Tensor],
    names: &[String],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape("adam: parameter, gradient and state counts differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!("adam: gradient shape {:?} for {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("tensor {i}"));
            return Err(Error::Grad(name));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((w, g), (m, v)) in iter {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *w -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// A pair of subject identifiers with its kin label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairRef {
    pub a: String,
    pub b: String,
    pub kin: bool,
}

/// All annotated kin pairs of `relation` followed by one negative per
/// positive: the first member is kept and the second is replaced by a
/// uniformly drawn subject that fills the same role in another family.
pub fn sample_pairs(registry: &Registry, relation: Relation, rng: &mut impl Rng) -> Result<Vec<PairRef>> {
    let positives = registry.kin_pairs(relation);
    if positives.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{relation}: {} positive pairs, need at least 2",
            positives.len()
        )));
    }
    let family = |id: &str| registry.subject(id).map(|s| s.family.as_str()).unwrap_or("");
    let mut seconds: Vec<&str> = positives.iter().map(|p| p.b.as_str()).collect();
    seconds.sort_unstable();
    seconds.dedup();
    let mut out: Vec<PairRef> = positives
        .iter()
        .map(|p| PairRef { a: p.a.clone(), b: p.b.clone(), kin: true })
        .collect();
    for p in &positives {
        let fam = family(&p.a);
        let candidates: Vec<&str> = seconds
            .iter()
            .copied()
            .filter(|b| *b != p.a && family(b) != fam)
            .collect();
        let b = candidates.choose(rng).ok_or_else(|| {
            Error::InsufficientData(format!("{relation}: no non-kin counterpart for {}", p.a))
        })?;
        out.push(PairRef { a: p.a.clone(), b: b.to_string(), kin: false });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub relation: Relation,
    pub index: usize,
    pub held_out: (String, String),
    pub train: Vec<PairRef>,
    pub val: Vec<PairRef>,
    pub test: Vec<PairRef>,
}

impl FoldPlan {
    /// Subjects that may not appear in training or validation.
    pub fn excluded(&self) -> BTreeSet<&str> {
        self.test.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]).collect()
    }
}

fn fold_rng(seed: u64, fold: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 * 8 + purpose);
    rng
}

const STREAM_PAIRS: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;

/// One fold per positive pair. Each fold draws its own negatives; the test
/// set is the held-out positive and the negative built from it, and every
/// subject in the test set is removed from training and validation.
pub fn loso_folds(registry: &Registry, relation: Relation, cfg: &TrainConfig) -> Result<Vec<FoldPlan>> {
    cfg.validate()?;
    let n_pos = registry.kin_pairs(relation).len();
    if n_pos < 3 {
        return Err(Error::InsufficientData(format!("{relation}: {n_pos} positive pairs, need at least 3")));
    }
    (0..n_pos)
        .map(|i| {
            let mut rng = fold_rng(cfg.seed, i, STREAM_PAIRS);
            let pairs = sample_pairs(registry, relation, &mut rng)?;
            let test = vec![pairs[i].clone(), pairs[n_pos + i].clone()];
            let excluded: BTreeSet<&str> = test.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]).collect();
            let mut rest: Vec<PairRef> = pairs
                .iter()
                .enumerate()
                .filter(|(j, p)| *j != i && *j != n_pos + i && !excluded.contains(p.a.as_str()) && !excluded.contains(p.b.as_str()))
                .map(|(_, p)| p.clone())
                .collect();
            if rest.len() < 2 {
                return Err(Error::InsufficientData(format!("{relation}: fold {i} has {} training pairs", rest.len())));
            }
            rest.shuffle(&mut rng);
            let n_val = ((rest.len() as f64 * cfg.val_fraction).ceil() as usize).clamp(1, rest.len() - 1);
            let train = rest.split_off(n_val);
            Ok(FoldPlan {
                relation,
                index: i,
                held_out: (pairs[i].a.clone(), pairs[i].b.clone()),
                train,
                val: rest,
                test,
            })
        })
        .collect()
}

/// Registry plus one network input per subject.
#[derive(Debug, Clone)]
pub struct KinDataset {
    pub registry: Registry,
    inputs: BTreeMap<String, Tensor>,
}

impl KinDataset {
    /// The first signal (by video id) of each subject is used.
    pub fn new(registry: Registry, signals: Vec<RppgSignal>) -> Result<Self> {
        registry.validate()?;
        let mut signals = signals;
        signals.sort_by(|a, b| (&a.subject_id, &a.video_id).cmp(&(&b.subject_id, &b.video_id)));
        let mut inputs = BTreeMap::new();
        let mut shape = None;
        for s in signals {
            if inputs.contains_key(&s.subject_id) {
                continue;
            }
            let dims = (s.channels(), s.length());
            if *shape.get_or_insert(dims) != dims {
                return Err(Error::Shape(format!(
                    "signal for {} is {}x{}, others are {}x{}",
                    s.subject_id,
                    dims.0,
                    dims.1,
                    shape.unwrap().0,
                    shape.unwrap().1
                )));
            }
            inputs.insert(s.subject_id.clone(), signal_tensor(&s)?);
        }
        Ok(Self { registry, inputs })
    }

    /// Loads `registry.json`-style metadata and every `*.csv` rPPG file in `dir`.
    pub fn load(registry: &Path, dir: &Path) -> Result<Self> {
        let registry = Registry::load(registry)?;
        let mut signals = Vec::new();
        for path in list_csv(dir)? {
            signals.push(RppgSignal::read(&path)?);
        }
        Self::new(registry, signals)
    }

    pub fn input(&self, subject: &str) -> Result<&Tensor> {
        self.inputs
            .get(subject)
            .ok_or_else(|| Error::InsufficientData(format!("no rPPG signal for subject {subject}")))
    }

    /// Input shape shared by every signal, `(channels, length)`.
    pub fn input_shape(&self) -> Option<(usize, usize)> {
        self.inputs.values().next().map(|t| (t.shape()[0], t.shape()[1]))
    }

    /// Drops kin pairs whose subjects lack signals.
    pub fn usable_registry(&self) -> Registry {
        let mut reg = self.registry.clone();
        reg.pairs.retain(|p| self.inputs.contains_key(&p.a) && self.inputs.contains_key(&p.b));
        reg
    }
}

pub fn list_csv(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr\n");
    for r in history {
        s.push_str(&format!("{},{:?},{:?},{:?}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Pairs with resolved inputs.
type Batch<'a> = Vec<(&'a Tensor, &'a Tensor, bool)>;

fn resolve<'a>(data: &'a KinDataset, pairs: &[PairRef]) -> Result<Batch<'a>> {
    pairs.iter().map(|p| Ok((data.input(&p.a)?, data.input(&p.b)?, p.kin))).collect()
}

/// Mean eval-mode loss.
pub fn eval_loss(params: &ModelParams, pairs: &[(&Tensor, &Tensor, bool)]) -> Result<f64> {
    let cfg = params.config();
    let mut total = 0.0;
    for (p, c, kin) in pairs {
        let l = contrastive_loss(&params.embed(p)?, &params.embed(c)?, *kin, cfg.margin, cfg.loss)?;
        total += l.loss;
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Trains on `fold.train` with early stopping on `fold.val` and returns the
/// parameters from the best validation epoch.
pub fn train_fold(data: &KinDataset, fold: &FoldPlan, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainedFold> {
    cfg.validate()?;
    let train = resolve(data, &fold.train)?;
    let val = resolve(data, &fold.val)?;
    if train.is_empty() {
        return Err(Error::InsufficientData(format!("fold {} has no training pairs", fold.index)));
    }
    let init_seed = fold_rng(cfg.seed, fold.index, STREAM_INIT).random::<u64>();
    let mut params = ModelParams::init(model_cfg, init_seed)?;
    let names = params.names().to_vec();
    let mut adam = AdamState::new(params.tensors());
    let mut rng = fold_rng(cfg.seed, fold.index, STREAM_TRAIN);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut wait = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = params.gradients();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (p, c, kin) = train[i];
                let fp = params.forward_train(p, &mut rng)?;
                let fc = params.forward_train(c, &mut rng)?;
                let mut l = contrastive_loss(fp.output(), fc.output(), kin, model_cfg.margin, model_cfg.loss)?;
                epoch_loss += l.loss;
                l.grad_p.scale(scale);
                l.grad_c.scale(scale);
                params.backward(&fp, &l.grad_p, &mut grads)?;
                params.backward(&fc, &l.grad_c, &mut grads)?;
            }
            let grads = grads.finish();
            adam_step(params.tensors_mut(), &names, &grads, &mut adam, cfg).map_err(|e| match e {
                Error::Grad(_) => Error::Training { epoch },
                other => other,
            })?;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = if val.is_empty() { train_loss } else { eval_loss(&params, &val)? };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Training { epoch });
        }
        history.push(EpochRecord { epoch, train_loss, val_loss, lr: cfg.lr });
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainedFold { params: best.1, history, best_epoch: best.2 })
}

/// A scored test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub fold: usize,
    pub a: String,
    pub b: String,
    pub kin: bool,
    pub distance: f64,
}

pub fn score_pairs(data: &KinDataset, params: &ModelParams, fold: usize, pairs: &[PairRef]) -> Result<Vec<ScoredPair>> {
    pairs
        .iter()
        .map(|p| {
            let d = embedding_distance(&params.embed(data.input(&p.a)?)?, &params.embed(data.input(&p.b)?)?);
            Ok(ScoredPair { fold, a: p.a.clone(), b: p.b.clone(), kin: p.kin, distance: d })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub plan: FoldPlan,
    pub trained: TrainedFold,
    pub scores: Vec<ScoredPair>,
}

/// Trains and scores every LOSO fold of `relation`, `jobs` folds at a time.
pub fn run_loso(
    data: &KinDataset,
    relation: Relation,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<Vec<FoldOutcome>> {
    let registry = data.usable_registry();
    let plans = loso_folds(&registry, relation, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        plans
            .into_par_iter()
            .map(|plan| {
                let trained = train_fold(data, &plan, model_cfg, cfg)?;
                let scores = score_pairs(data, &trained.params, plan.index, &plan.test)?;
                Ok(FoldOutcome { plan, trained, scores })
            })
            .collect()
    })
}

/// Writes `fold_NNN.pkin` and `fold_NNN_history.csv` for each fold.
pub fn write_fold_artifacts(dir: &Path, outcomes: &[FoldOutcome]) -> Result<()> {
    for o in outcomes {
        let stem = format!("fold_{:03}", o.plan.index);
        o.trained.params.save(dir.join(format!("{stem}.pkin")))?;
        write_atomic(&dir.join(format!("{stem}_history.csv")), history_csv(&o.trained.history).as_bytes())?;
    }
    Ok(())
}
