//! Training: loss heads, bias-corrected Adam with freeze masks, the
//! mini-batch epoch loop, the rescue protocol (freeze a trained circuit,
//! train only a fresh diagonal observable), and evaluation.
//!
//! Determinism contract: given (seed, config, data), every run produces
//! identical parameters and metrics regardless of the thread count. Batch
//! members are processed in parallel but reduced in index order.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::{FeatureSet, Split};
use crate::error::{Error, Result};
use crate::grad::{
    adjoint_sweep_complex, adjoint_sweep_real, apply_klocal_dense, effective_diagonal,
    marginals_real, pack_dense_grad, run_circuit_real, EnginePlan,
};
use crate::model::{
    encode, parity_eigenvalues, sliding_windows, variational_layers, CircuitParams,
    DenseObservable, DiagonalObservable, Mode, ModelConfig, Observables,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
    Mse,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::SoftmaxCrossEntropy => "cross-entropy",
            LossKind::Mse => "mse",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" | "ce" => Ok(LossKind::SoftmaxCrossEntropy),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Validation(format!(
                "unknown loss '{other}' (expected cross-entropy or mse)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hyperparams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch: usize,
    pub epochs: usize,
    pub loss: LossKind,
    /// Worker threads for batch parallelism; 0 picks the machine default.
    pub threads: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.03,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch: 32,
            epochs: 50,
            loss: LossKind::SoftmaxCrossEntropy,
            threads: 0,
        }
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug)]
pub struct Metrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub wall_seconds: f64,
}

/// Flat parameter layout: circuit angles first, then observable parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub theta_len: usize,
    pub obs_len: usize,
}

impl ParamLayout {
    pub fn total(&self) -> usize {
        self.theta_len + self.obs_len
    }

    pub fn for_config(cfg: &ModelConfig) -> Self {
        let theta_len = cfg.layers * cfg.n;
        let obs_len = match cfg.mode {
            Mode::Vqc => 0,
            Mode::Dano => cfg.windows << cfg.k,
            Mode::Ano => cfg.windows << (2 * cfg.k),
        };
        ParamLayout { theta_len, obs_len }
    }
}

/// Complete optimizer state: parameters, Adam moments, step/epoch counters,
/// seed, and the per-parameter freeze mask.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub cfg: ModelConfig,
    pub params: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub step: u64,
    pub epoch: usize,
    pub seed: u64,
    pub frozen: Vec<bool>,
}

impl TrainState {
    /// Fresh state: circuit angles i.i.d. uniform on (-pi, pi), observable
    /// eigenvalues at the Pauli-Z parity point, zero moments.
    pub fn new_initial(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layout = ParamLayout::for_config(cfg);
        let theta = CircuitParams::random(cfg.layers, cfg.n, &mut rng);
        let mut params = theta.flat().to_vec();
        match cfg.mode {
            Mode::Vqc => {}
            Mode::Dano => {
                let parity = parity_eigenvalues(cfg.k);
                for _ in 0..cfg.windows {
                    params.extend_from_slice(&parity);
                }
            }
            Mode::Ano => {
                let windows = sliding_windows(cfg.n, cfg.k, cfg.windows)?;
                for w in windows {
                    params.extend_from_slice(&DenseObservable::parity(w).to_flat());
                }
            }
        }
        debug_assert_eq!(params.len(), layout.total());
        let total = layout.total();
        Ok(TrainState {
            cfg: cfg.clone(),
            params,
            m1: vec![0.0; total],
            m2: vec![0.0; total],
            step: 0,
            epoch: 0,
            seed,
            frozen: vec![false; total],
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::for_config(&self.cfg)
    }

    pub fn theta(&self) -> &[f64] {
        &self.params[..self.layout().theta_len]
    }

    pub fn observable_params(&self) -> &[f64] {
        &self.params[self.layout().theta_len..]
    }

    pub fn circuit_params(&self) -> Result<CircuitParams> {
        CircuitParams::new(self.theta().to_vec(), self.cfg.layers, self.cfg.n)
    }

    /// Rebuilds the observable family from the flat parameter tail (or the
    /// fixed parity readout for VQC).
    pub fn observables(&self) -> Result<Observables> {
        let windows = sliding_windows(self.cfg.n, self.cfg.k, self.cfg.windows)?;
        let obs = self.observable_params();
        match self.cfg.mode {
            Mode::Vqc => Ok(Observables::Diagonal(
                windows.into_iter().map(DiagonalObservable::parity).collect(),
            )),
            Mode::Dano => {
                let kdim = self.cfg.kdim();
                Ok(Observables::Diagonal(
                    windows
                        .into_iter()
                        .enumerate()
                        .map(|(j, w)| {
                            DiagonalObservable::new(obs[j * kdim..(j + 1) * kdim].to_vec(), w)
                        })
                        .collect::<Result<Vec<_>>>()?,
                ))
            }
            Mode::Ano => {
                let kdim = self.cfg.kdim();
                let plen = kdim * kdim;
                let off = kdim * (kdim - 1) / 2;
                Ok(Observables::Dense(
                    windows
                        .into_iter()
                        .enumerate()
                        .map(|(j, w)| {
                            let p = &obs[j * plen..(j + 1) * plen];
                            DenseObservable::new(
                                p[..kdim].to_vec(),
                                p[kdim..kdim + off].to_vec(),
                                p[kdim + off..].to_vec(),
                                w,
                            )
                        })
                        .collect::<Result<Vec<_>>>()?,
                ))
            }
        }
    }

    /// Eigenvalue vectors per window for the diagonal modes.
    fn lambdas(&self) -> Vec<Vec<f64>> {
        match self.cfg.mode {
            Mode::Vqc => {
                let parity = parity_eigenvalues(self.cfg.k);
                vec![parity; self.cfg.windows]
            }
            Mode::Dano => {
                let kdim = self.cfg.kdim();
                self.observable_params()
                    .chunks_exact(kdim)
                    .map(|c| c.to_vec())
                    .collect()
            }
            Mode::Ano => unreachable!("lambdas() is only used on diagonal modes"),
        }
    }
}

/// Squared error of one output vector against its target.
pub fn mse_loss(z: &[f64], y: &[f64]) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::Shape(format!(
            "output has {} entries, target has {}",
            z.len(),
            y.len()
        )));
    }
    Ok(z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Gradient of the batch-mean squared error with respect to one output:
/// 2 (z - y) / batch.
pub fn mse_grad(z: &[f64], y: &[f64], batch: usize) -> Result<Vec<f64>> {
    if z.len() != y.len() {
        return Err(Error::Shape(format!(
            "output has {} entries, target has {}",
            z.len(),
            y.len()
        )));
    }
    Ok(z.iter()
        .zip(y)
        .map(|(a, b)| 2.0 * (a - b) / batch as f64)
        .collect())
}

/// Numerically stabilized softmax cross entropy; returns the loss and its
/// gradient (softmax minus one-hot).
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let classes = logits.len();
    if classes < 2 {
        return Err(Error::Validation(format!(
            "cross entropy needs at least 2 classes, got {classes}"
        )));
    }
    if label >= classes {
        return Err(Error::Validation(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// One bias-corrected Adam update over the unfrozen parameters.
pub fn adam_step(state: &mut TrainState, grads: &[f64], hp: &Hyperparams) -> Result<()> {
    if grads.len() != state.params.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            grads.len(),
            state.params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..state.params.len() {
        if state.frozen[i] {
            continue;
        }
        let g = grads[i];
        state.m1[i] = hp.beta1 * state.m1[i] + (1.0 - hp.beta1) * g;
        state.m2[i] = hp.beta2 * state.m2[i] + (1.0 - hp.beta2) * g * g;
        let mhat = state.m1[i] / bc1;
        let vhat = state.m2[i] / bc2;
        state.params[i] -= hp.lr * mhat / (vhat.sqrt() + hp.epsilon);
    }
    Ok(())
}

/// Per-sample result of the loss head over the first C outputs.
struct HeadOut {
    loss: f64,
    /// dL/dz over all m outputs (zero beyond the class logits).
    weights: Vec<f64>,
    correct: bool,
}

fn loss_head(z: &[f64], label: usize, classes: usize, kind: LossKind) -> Result<HeadOut> {
    let logits = &z[..classes];
    let predicted = argmax(logits);
    let mut weights = vec![0.0; z.len()];
    let loss = match kind {
        LossKind::SoftmaxCrossEntropy => {
            let (loss, grad) = softmax_cross_entropy(logits, label)?;
            weights[..classes].copy_from_slice(&grad);
            loss
        }
        LossKind::Mse => {
            let mut y = vec![0.0; classes];
            y[label] = 1.0;
            let loss = mse_loss(logits, &y)?;
            for (w, (zc, yc)) in weights[..classes].iter_mut().zip(logits.iter().zip(&y)) {
                *w = 2.0 * (zc - yc);
            }
            loss
        }
    };
    Ok(HeadOut {
        loss,
        weights,
        correct: predicted == label,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct SampleOut {
    loss: f64,
    correct: bool,
    d_theta: Option<Vec<f64>>,
    d_obs: Option<Vec<f64>>,
}

/// Forward + gradients for one sample on the diagonal fast path.
fn sample_pass_diag(
    x: &[f64],
    label: usize,
    theta: &CircuitParams,
    lambdas: &[Vec<f64>],
    plan: &EnginePlan,
    cfg: &ModelConfig,
    kind: LossKind,
    want_theta: bool,
    want_obs: bool,
) -> Result<SampleOut> {
    let state = run_circuit_real(x, theta, plan);
    let marginals = marginals_real(&state, plan);
    let z: Vec<f64> = marginals
        .iter()
        .zip(lambdas)
        .map(|(p, lam)| p.iter().zip(lam).map(|(p, l)| p * l).sum())
        .collect();
    let head = loss_head(&z, label, cfg.classes, kind)?;
    let d_obs = want_obs.then(|| {
        let mut d = Vec::with_capacity(cfg.windows << cfg.k);
        for (w, p) in head.weights.iter().zip(&marginals) {
            d.extend(p.iter().map(|pm| w * pm));
        }
        d
    });
    let d_theta = want_theta.then(|| {
        let d_eff = effective_diagonal(&head.weights, lambdas, plan, cfg.n);
        adjoint_sweep_real(theta, &state, &d_eff, plan)
    });
    Ok(SampleOut {
        loss: head.loss,
        correct: head.correct,
        d_theta,
        d_obs,
    })
}

/// Forward + gradients for one sample in dense-observable mode.
fn sample_pass_dense(
    x: &[f64],
    label: usize,
    theta: &CircuitParams,
    obs: &[DenseObservable],
    cfg: &ModelConfig,
    kind: LossKind,
    want_theta: bool,
    want_obs: bool,
) -> Result<SampleOut> {
    let mut state = encode(x, cfg.n)?;
    variational_layers(&mut state, theta)?;
    let kdim = cfg.kdim();
    let rhos: Vec<Vec<num_complex::Complex64>> = obs
        .iter()
        .map(|o| state.reduced_density_matrix(&o.window))
        .collect::<Result<Vec<_>>>()?;
    let mut z = Vec::with_capacity(obs.len());
    for (o, rho) in obs.iter().zip(&rhos) {
        let h = o.unpack();
        let mut val = num_complex::Complex64::ZERO;
        for a in 0..kdim {
            for b in 0..kdim {
                val += rho[a * kdim + b] * h[b * kdim + a];
            }
        }
        z.push(val.re);
    }
    let head = loss_head(&z, label, cfg.classes, kind)?;
    let d_obs = want_obs.then(|| {
        let mut d = Vec::with_capacity(obs.len() * kdim * kdim);
        for (w, rho) in head.weights.iter().zip(&rhos) {
            d.extend(pack_dense_grad(rho, kdim).iter().map(|g| w * g));
        }
        d
    });
    let d_theta = if want_theta {
        let dim = state.amplitudes().len();
        let mut phi = vec![num_complex::Complex64::ZERO; dim];
        for (w, o) in head.weights.iter().zip(obs) {
            if *w == 0.0 {
                continue;
            }
            let contrib = apply_klocal_dense(&state, o)?;
            for (p, c) in phi.iter_mut().zip(contrib) {
                *p += c * *w;
            }
        }
        Some(adjoint_sweep_complex(theta, &state, phi))
    } else {
        None
    };
    Ok(SampleOut {
        loss: head.loss,
        correct: head.correct,
        d_theta,
        d_obs,
    })
}

fn check_dataset(cfg: &ModelConfig, data: &FeatureSet) -> Result<()> {
    if data.len() == 0 {
        return Err(Error::Validation("dataset is empty".into()));
    }
    if data.dim() != cfg.n {
        return Err(Error::Shape(format!(
            "dataset has {} features per row, model expects {}",
            data.dim(),
            cfg.n
        )));
    }
    if data.classes() < cfg.classes {
        return Err(Error::Validation(format!(
            "dataset has {} classes, model expects {}",
            data.classes(),
            cfg.classes
        )));
    }
    let bound = std::f64::consts::PI + 1e-9;
    for i in 0..data.len() {
        if data.feature_row(i).iter().any(|v| v.abs() > bound) {
            return Err(Error::Validation(format!(
                "feature row {i} leaves the angle range [-pi, pi]"
            )));
        }
    }
    Ok(())
}

fn shuffle_rng(seed: u64, epoch: usize) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(
        seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

/// Trains a fresh model for `hp.epochs` epochs.
pub fn train(
    cfg: &ModelConfig,
    data: &FeatureSet,
    hp: &Hyperparams,
    seed: u64,
) -> Result<(TrainState, Vec<Metrics>)> {
    train_with(cfg, data, hp, seed, |_, _| Ok(()))
}

/// Like `train`, with a per-epoch callback (checkpointing, CSV streaming).
pub fn train_with(
    cfg: &ModelConfig,
    data: &FeatureSet,
    hp: &Hyperparams,
    seed: u64,
    on_epoch: impl FnMut(&TrainState, &Metrics) -> Result<()>,
) -> Result<(TrainState, Vec<Metrics>)> {
    let mut state = TrainState::new_initial(cfg, seed)?;
    let history = run_epochs(&mut state, data, hp, hp.epochs, on_epoch)?;
    Ok((state, history))
}

/// Rescue options: freeze the circuit of a trained VQC and attach a fresh
/// k-local diagonal observable.
#[derive(Clone, Debug)]
pub struct RescueOptions {
    pub k: usize,
    pub switch_epoch: usize,
    pub total_epochs: usize,
    pub hp: Hyperparams,
}

/// Continues a pure-VQC checkpoint as a frozen-circuit DANO branch: only the
/// fresh eigenvalues train from `switch_epoch` to `total_epochs`.
pub fn rescue(
    checkpoint: &TrainState,
    data: &FeatureSet,
    opts: &RescueOptions,
    on_epoch: impl FnMut(&TrainState, &Metrics) -> Result<()>,
) -> Result<(TrainState, Vec<Metrics>)> {
    if checkpoint.cfg.mode != Mode::Vqc {
        return Err(Error::Validation(format!(
            "rescue requires a pure-VQC checkpoint, got mode={}",
            checkpoint.cfg.mode.as_str()
        )));
    }
    if checkpoint.epoch != opts.switch_epoch {
        return Err(Error::Validation(format!(
            "checkpoint is at epoch {}, expected the switch epoch {}",
            checkpoint.epoch, opts.switch_epoch
        )));
    }
    if opts.total_epochs <= opts.switch_epoch {
        return Err(Error::Validation(format!(
            "total epochs {} must exceed the switch epoch {}",
            opts.total_epochs, opts.switch_epoch
        )));
    }
    let cfg = ModelConfig::new(
        checkpoint.cfg.n,
        opts.k,
        checkpoint.cfg.layers,
        Mode::Dano,
        checkpoint.cfg.windows,
        checkpoint.cfg.classes,
    )?;
    let layout = ParamLayout::for_config(&cfg);
    let mut params = checkpoint.theta().to_vec();
    let parity = parity_eigenvalues(cfg.k);
    for _ in 0..cfg.windows {
        params.extend_from_slice(&parity);
    }
    let mut frozen = vec![false; layout.total()];
    for f in frozen.iter_mut().take(layout.theta_len) {
        *f = true;
    }
    let mut state = TrainState {
        cfg,
        params,
        m1: vec![0.0; layout.total()],
        m2: vec![0.0; layout.total()],
        step: 0,
        epoch: opts.switch_epoch,
        seed: checkpoint.seed,
        frozen,
    };
    let history = run_epochs(&mut state, data, &opts.hp, opts.total_epochs, on_epoch)?;
    Ok((state, history))
}

/// Epoch loop shared by `train` and `rescue`: runs until `target_epoch`.
fn run_epochs(
    state: &mut TrainState,
    data: &FeatureSet,
    hp: &Hyperparams,
    target_epoch: usize,
    mut on_epoch: impl FnMut(&TrainState, &Metrics) -> Result<()>,
) -> Result<Vec<Metrics>> {
    check_dataset(&state.cfg, data)?;
    if hp.batch == 0 {
        return Err(Error::Validation("batch size must be positive".into()));
    }
    let train_idx = data.split_indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let val_idx = data.split_indices(Split::Val);
    let test_idx = data.split_indices(Split::Test);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(hp.threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;

    let layout = state.layout();
    let want_theta = state.frozen[..layout.theta_len].iter().any(|f| !f);
    let want_obs =
        layout.obs_len > 0 && state.frozen[layout.theta_len..].iter().any(|f| !f);
    let plan = EnginePlan::new(&state.cfg)?;

    let mut history = Vec::new();
    while state.epoch < target_epoch {
        let epoch_start = Instant::now();
        let mut order = train_idx.clone();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng(state.seed, state.epoch));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(hp.batch) {
            let theta = state.circuit_params()?;
            let cfg = &state.cfg;
            let kind = hp.loss;
            let outs: Vec<Result<SampleOut>> = match cfg.mode {
                Mode::Vqc | Mode::Dano => {
                    let lambdas = state.lambdas();
                    pool.install(|| {
                        batch
                            .par_iter()
                            .map(|&i| {
                                sample_pass_diag(
                                    data.feature_row(i),
                                    data.label(i),
                                    &theta,
                                    &lambdas,
                                    &plan,
                                    cfg,
                                    kind,
                                    want_theta,
                                    want_obs,
                                )
                            })
                            .collect()
                    })
                }
                Mode::Ano => {
                    let obs = match state.observables()? {
                        Observables::Dense(list) => list,
                        _ => unreachable!(),
                    };
                    pool.install(|| {
                        batch
                            .par_iter()
                            .map(|&i| {
                                sample_pass_dense(
                                    data.feature_row(i),
                                    data.label(i),
                                    &theta,
                                    &obs,
                                    cfg,
                                    kind,
                                    want_theta,
                                    want_obs,
                                )
                            })
                            .collect()
                    })
                }
            };
            // Fixed-order reduction keeps results independent of the
            // thread count.
            let mut grads = vec![0.0; layout.total()];
            for out in outs {
                let out = out?;
                loss_sum += out.loss;
                correct += out.correct as usize;
                if let Some(d) = out.d_theta {
                    for (g, v) in grads[..layout.theta_len].iter_mut().zip(&d) {
                        *g += v;
                    }
                }
                if let Some(d) = out.d_obs {
                    for (g, v) in grads[layout.theta_len..].iter_mut().zip(&d) {
                        *g += v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            adam_step(state, &grads, hp)?;
        }

        state.epoch += 1;
        let metrics = Metrics {
            epoch: state.epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            train_accuracy: correct as f64 / train_idx.len() as f64,
            val_accuracy: if val_idx.is_empty() {
                None
            } else {
                Some(pool.install(|| accuracy_on(state, data, &val_idx))?)
            },
            test_accuracy: if test_idx.is_empty() {
                0.0
            } else {
                pool.install(|| accuracy_on(state, data, &test_idx))?
            },
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        };
        on_epoch(state, &metrics)?;
        history.push(metrics);
    }
    Ok(history)
}

/// Argmax-over-first-C accuracy of a model state on one dataset split.
pub fn evaluate(state: &TrainState, data: &FeatureSet, split: Split) -> Result<f64> {
    check_dataset(&state.cfg, data)?;
    let idx = data.split_indices(split);
    if idx.is_empty() {
        return Err(Error::Validation(format!(
            "no samples tagged {split:?} to evaluate"
        )));
    }
    accuracy_on(state, data, &idx)
}

fn accuracy_on(state: &TrainState, data: &FeatureSet, idx: &[usize]) -> Result<f64> {
    let theta = state.circuit_params()?;
    let cfg = &state.cfg;
    let correct: usize = match cfg.mode {
        Mode::Vqc | Mode::Dano => {
            let plan = EnginePlan::new(cfg)?;
            let lambdas = state.lambdas();
            idx.par_iter()
                .map(|&i| {
                    let s = run_circuit_real(data.feature_row(i), &theta, &plan);
                    let z: Vec<f64> = marginals_real(&s, &plan)
                        .iter()
                        .zip(&lambdas)
                        .map(|(p, lam)| p.iter().zip(lam).map(|(p, l)| p * l).sum())
                        .collect();
                    (argmax(&z[..cfg.classes]) == data.label(i)) as usize
                })
                .sum()
        }
        Mode::Ano => {
            let obs = state.observables()?;
            idx.par_iter()
                .map(|&i| -> Result<usize> {
                    let z = crate::model::forward(data.feature_row(i), &theta, &obs, cfg)?;
                    Ok((argmax(&z[..cfg.classes]) == data.label(i)) as usize)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum()
        }
    };
    Ok(correct as f64 / idx.len() as f64)
}
