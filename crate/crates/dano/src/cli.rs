//! Command implementations behind the `dano` binary: data preparation,
//! training runs with reproducible run directories, the rescue branch,
//! evaluation, the verification report, and the measurement-cost bench.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    self, load_idx, load_pgm, parse_yale_filename, pooled_angle_features, rescale_to_angles,
    stratified_split, FeatureSet, Split,
};
use crate::error::{Error, Result};
use crate::grad;
use crate::io::{
    self, digest_hex, file_digest, metrics_csv_row, read_checkpoint, read_feature_cache,
    write_checkpoint, write_feature_cache, write_kv, METRICS_COLUMNS,
};
use crate::model::{
    count_params, sliding_windows, CircuitParams, DiagonalObservable, Mode, ModelConfig,
    Observables, ParamCounts,
};
use crate::oracle::{
    check_hermitian_bound, dense_circuit_matrix, embed_klocal, random_state, random_unitary,
    DenseMatrix,
};
use crate::train::{
    evaluate, rescue, train_with, Hyperparams, LossKind, Metrics, RescueOptions, TrainState,
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Everything a training run needs; assembled from a flat key=value config
/// file overridden by CLI flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub n: usize,
    pub k: usize,
    pub layers: usize,
    pub windows: usize,
    pub classes: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub loss: LossKind,
    pub threads: usize,
    pub data: PathBuf,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn model_config(&self) -> Result<ModelConfig> {
        ModelConfig::new(self.n, self.k, self.layers, self.mode, self.windows, self.classes)
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            loss: self.loss,
            threads: self.threads,
            ..Default::default()
        }
    }

    /// Flat key=value snapshot; `threads` and `out` are execution details and
    /// stay out of the run identity.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        vec![
            ("mode".into(), self.mode.as_str().into()),
            ("n".into(), self.n.to_string()),
            ("k".into(), self.k.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("windows".into(), self.windows.to_string()),
            ("classes".into(), self.classes.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("batch".into(), self.batch.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("loss".into(), self.loss.as_str().into()),
        ]
    }

    /// Collects every problem, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(Error::Config(mut inner)) = self.model_config() {
            problems.append(&mut inner);
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive".into());
        }
        if self.batch == 0 {
            problems.push("batch size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            problems.push(format!("learning rate must be positive, got {}", self.lr));
        }
        if !self.data.exists() {
            problems.push(format!("data cache not found: {}", self.data.display()));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Optional overrides applied on top of a config file (or built-in defaults).
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub mode: Option<Mode>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub layers: Option<usize>,
    pub windows: Option<usize>,
    pub classes: Option<usize>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub loss: Option<LossKind>,
    pub threads: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn build_run_config(config_file: Option<&Path>, ov: &RunOverrides) -> Result<RunConfig> {
    // Defaults first, then file, then flags.
    let mut mode = Mode::Vqc;
    let mut n = 16usize;
    let mut k: Option<usize> = None;
    let mut layers = 6usize;
    let mut windows: Option<usize> = None;
    let mut classes = 10usize;
    let mut seed = 0u64;
    let mut epochs = 50usize;
    let mut batch = 32usize;
    let mut lr = 0.03f64;
    let mut loss = LossKind::SoftmaxCrossEntropy;
    let mut threads = 0usize;
    let mut data = PathBuf::new();
    let mut out = PathBuf::from("runs");

    if let Some(path) = config_file {
        for (key, value) in io::read_kv(path)? {
            let bad = || Error::Validation(format!("{}: bad value for {key}: '{value}'", path.display()));
            match key.as_str() {
                "mode" => mode = value.parse()?,
                "n" => n = value.parse().map_err(|_| bad())?,
                "k" => k = Some(value.parse().map_err(|_| bad())?),
                "layers" => layers = value.parse().map_err(|_| bad())?,
                "windows" => windows = Some(value.parse().map_err(|_| bad())?),
                "classes" => classes = value.parse().map_err(|_| bad())?,
                "seed" => seed = value.parse().map_err(|_| bad())?,
                "epochs" => epochs = value.parse().map_err(|_| bad())?,
                "batch" => batch = value.parse().map_err(|_| bad())?,
                "lr" => lr = value.parse().map_err(|_| bad())?,
                "loss" => loss = value.parse()?,
                "threads" => threads = value.parse().map_err(|_| bad())?,
                "data" => data = PathBuf::from(value),
                "out" => out = PathBuf::from(value),
                other => {
                    return Err(Error::Validation(format!(
                        "{}: unknown config key '{other}'",
                        path.display()
                    )))
                }
            }
        }
    }
    if let Some(v) = ov.mode {
        mode = v;
    }
    if let Some(v) = ov.n {
        n = v;
    }
    if let Some(v) = ov.k {
        k = Some(v);
    }
    if let Some(v) = ov.layers {
        layers = v;
    }
    if let Some(v) = ov.windows {
        windows = Some(v);
    }
    if let Some(v) = ov.classes {
        classes = v;
    }
    if let Some(v) = ov.seed {
        seed = v;
    }
    if let Some(v) = ov.epochs {
        epochs = v;
    }
    if let Some(v) = ov.batch {
        batch = v;
    }
    if let Some(v) = ov.lr {
        lr = v;
    }
    if let Some(v) = ov.loss {
        loss = v;
    }
    if let Some(v) = ov.threads {
        threads = v;
    }
    if let Some(v) = &ov.data {
        data = v.clone();
    }
    if let Some(v) = &ov.out {
        out = v.clone();
    }
    let cfg = RunConfig {
        mode,
        // VQC fixes k=1; other modes default to 2-local when unspecified.
        k: k.unwrap_or(if mode == Mode::Vqc { 1 } else { 2 }),
        n,
        layers,
        windows: windows.unwrap_or(n),
        classes,
        seed,
        epochs,
        batch,
        lr,
        loss,
        threads,
        data,
        out,
    };
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// prep-data
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum DataSource {
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        limit: usize,
    },
    YaleB {
        dir: PathBuf,
    },
}

#[derive(Clone, Debug)]
pub struct PrepOptions {
    pub source: DataSource,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PrepSummary {
    pub cache: PathBuf,
    pub meta: PathBuf,
    pub rows: usize,
    pub dim: usize,
}

pub fn cmd_prep_data(opts: &PrepOptions) -> Result<PrepSummary> {
    std::fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    match &opts.source {
        DataSource::Mnist {
            images,
            labels,
            limit,
        } => prep_mnist(images, labels, *limit, &opts.out, opts.seed),
        DataSource::YaleB { dir } => prep_yaleb(dir, &opts.out, opts.seed),
    }
}

/// MNIST pipeline: first `limit` samples, seeded 90/10 train/test shuffle,
/// 7x7 average pooling to 16 features, rescale to [0, pi]. No val split.
fn prep_mnist(
    images_path: &Path,
    labels_path: &Path,
    limit: usize,
    out: &Path,
    seed: u64,
) -> Result<PrepSummary> {
    let (images, labels) = load_idx(images_path, labels_path)?;
    if images.count() < limit {
        return Err(Error::Validation(format!(
            "requested {limit} samples but the file holds {}",
            images.count()
        )));
    }
    let subset = data::RawImages::new(
        images.rows,
        images.cols,
        (0..limit).flat_map(|i| images.image(i).to_vec()).collect(),
    )?;
    let labels = &labels[..limit];

    // Seeded shuffle, then 90% train / 10% test.
    let mut order: Vec<usize> = (0..limit).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_count = limit * 9 / 10;
    let mut splits = vec![Split::Train; limit];
    for &i in order.iter().skip(train_count) {
        splits[i] = Split::Test;
    }

    let fs = pooled_angle_features(&subset, labels, &splits, 7, 0.0, std::f64::consts::PI, 10)?;
    let cache = out.join("mnist.features");
    write_feature_cache(&cache, &fs)?;
    let meta = out.join("mnist.features.meta");
    write_kv(
        &meta,
        &[
            ("source".into(), "mnist-idx".into()),
            ("images".into(), images_path.display().to_string()),
            ("images_digest".into(), file_digest(images_path)?),
            ("labels_digest".into(), file_digest(labels_path)?),
            ("samples".into(), limit.to_string()),
            ("pooling".into(), "avg7x7".into()),
            ("rescale".into(), "[0,pi]".into()),
            ("split".into(), format!("{train_count}/{}", limit - train_count)),
            ("split_seed".into(), seed.to_string()),
        ],
    )?;
    Ok(PrepSummary {
        cache,
        meta,
        rows: fs.len(),
        dim: fs.dim(),
    })
}

/// Extended-Yale-B pipeline: keep non-ambient captures with |azimuth| < 25
/// degrees, flatten, PCA to 16 dimensions fitted on the training split,
/// rescale to [-pi, pi], stratified 0.8/0.1/0.1 split.
fn prep_yaleb(dir: &Path, out: &Path, seed: u64) -> Result<PrepSummary> {
    let mut entries: Vec<(PathBuf, data::YaleCapture)> = Vec::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(cap) = parse_yale_filename(&name) {
            if !cap.ambient && cap.azimuth.abs() < 25 {
                entries.push((entry.path(), cap));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Validation(format!(
            "no usable captures under {}",
            dir.display()
        )));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut subjects: Vec<u32> = entries.iter().map(|(_, c)| c.subject).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let class_of = |s: u32| subjects.iter().position(|&x| x == s).unwrap();

    let first = load_pgm(&entries[0].0)?;
    let (rows_px, cols_px) = (first.rows, first.cols);
    let dim_in = rows_px * cols_px;
    let mut flat = Vec::with_capacity(entries.len() * dim_in);
    let mut labels = Vec::with_capacity(entries.len());
    for (path, cap) in &entries {
        let img = load_pgm(path)?;
        if img.rows != rows_px || img.cols != cols_px {
            return Err(Error::Validation(format!(
                "{}: image is {}x{}, expected {rows_px}x{cols_px}",
                path.display(),
                img.rows,
                img.cols
            )));
        }
        flat.extend(img.pixels.iter().map(|&p| p as f64));
        labels.push(class_of(cap.subject));
    }

    let splits = stratified_split(&labels, &[0.8, 0.1, 0.1], seed)?;
    let train_rows: Vec<usize> = (0..labels.len()).filter(|&i| splits[i] == Split::Train).collect();
    let mut train_flat = Vec::with_capacity(train_rows.len() * dim_in);
    for &i in &train_rows {
        train_flat.extend_from_slice(&flat[i * dim_in..(i + 1) * dim_in]);
    }
    let pca = data::pca_fit(&train_flat, train_rows.len(), dim_in, 16)?;
    let mut features = data::pca_transform(&pca, &flat, labels.len())?;
    rescale_to_angles(
        &mut features,
        16,
        &splits,
        -std::f64::consts::PI,
        std::f64::consts::PI,
    )?;
    let fs = FeatureSet::from_parts(16, subjects.len(), features, labels, splits)?;
    let cache = out.join("yaleb.features");
    write_feature_cache(&cache, &fs)?;
    let meta = out.join("yaleb.features.meta");
    let evr = pca
        .explained_variance_ratio
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(",");
    write_kv(
        &meta,
        &[
            ("source".into(), "yaleb-pgm".into()),
            ("dir".into(), dir.display().to_string()),
            ("subjects".into(), subjects.len().to_string()),
            ("filter".into(), "non-ambient, |azimuth|<25".into()),
            ("pca_components".into(), "16".into()),
            ("pca_explained_variance_ratio".into(), evr),
            ("rescale".into(), "[-pi,pi]".into()),
            ("split".into(), "0.8/0.1/0.1 stratified".into()),
            ("split_seed".into(), seed.to_string()),
        ],
    )?;
    Ok(PrepSummary {
        cache,
        meta,
        rows: fs.len(),
        dim: fs.dim(),
    })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub metrics_csv: PathBuf,
    pub best_checkpoint: PathBuf,
    pub counts: ParamCounts,
    pub history: Vec<Metrics>,
    pub final_state: TrainState,
}

/// Deterministic run identity: config snapshot plus the data digest.
fn run_id(cfg: &RunConfig) -> Result<String> {
    let mut text = String::new();
    for (k, v) in cfg.snapshot() {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str(&file_digest(&cfg.data)?);
    Ok(digest_hex(text.as_bytes()))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let model_cfg = cfg.model_config()?;
    let dataset = read_feature_cache(&cfg.data)?;
    let id = run_id(cfg)?;
    let run_dir = cfg.out.join(format!("run-{id}"));
    let ck_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;

    let mut snapshot = cfg.snapshot();
    let counts = count_params(&model_cfg);
    snapshot.push(("circuit_params".into(), counts.circuit.to_string()));
    snapshot.push(("observable_params".into(), counts.observable.to_string()));
    snapshot.push(("total_params".into(), counts.total.to_string()));
    write_kv(&run_dir.join("config.txt"), &snapshot)?;
    write_kv(
        &run_dir.join("inputs.digest"),
        &[
            ("data".into(), file_digest(&cfg.data)?),
            ("run_id".into(), id.clone()),
        ],
    )?;

    let metrics_csv = run_dir.join("metrics.csv");
    let mut csv = std::fs::File::create(&metrics_csv).map_err(|e| Error::io(&metrics_csv, e))?;
    writeln!(csv, "{METRICS_COLUMNS}").map_err(|e| Error::io(&metrics_csv, e))?;

    let has_val = !dataset.split_indices(Split::Val).is_empty();
    let mut best: Option<(f64, usize)> = None;
    let ck_dir2 = ck_dir.clone();
    let (final_state, history) = train_with(
        &model_cfg,
        &dataset,
        &cfg.hyperparams(),
        cfg.seed,
        |state, m| {
            writeln!(csv, "{}", metrics_csv_row(m)).map_err(|e| Error::io(&metrics_csv, e))?;
            csv.flush().map_err(|e| Error::io(&metrics_csv, e))?;
            write_checkpoint(&ck_dir2.join(format!("epoch-{:04}.ckpt", m.epoch)), state)?;
            let score = if has_val {
                m.val_accuracy.unwrap_or(0.0)
            } else {
                m.test_accuracy
            };
            if best.map(|(b, _)| score > b).unwrap_or(true) {
                best = Some((score, m.epoch));
            }
            Ok(())
        },
    )?;

    let best_epoch = best.map(|(_, e)| e).unwrap_or(history.len());
    let best_src = ck_dir.join(format!("epoch-{best_epoch:04}.ckpt"));
    let best_checkpoint = run_dir.join("best.ckpt");
    std::fs::copy(&best_src, &best_checkpoint).map_err(|e| Error::io(&best_src, e))?;

    Ok(TrainSummary {
        run_dir,
        metrics_csv,
        best_checkpoint,
        counts,
        history,
        final_state,
    })
}

// ---------------------------------------------------------------------------
// rescue
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RescueCliOptions {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub k: usize,
    pub switch_epoch: usize,
    pub total_epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub loss: LossKind,
    pub threads: usize,
}

impl Default for RescueCliOptions {
    fn default() -> Self {
        let hp = Hyperparams::default();
        RescueCliOptions {
            checkpoint: PathBuf::new(),
            data: PathBuf::new(),
            out: PathBuf::from("runs"),
            k: 8,
            switch_epoch: 30,
            total_epochs: 50,
            lr: hp.lr,
            batch: hp.batch,
            loss: hp.loss,
            threads: 0,
        }
    }
}

#[derive(Debug)]
pub struct RescueSummary {
    pub branch_dir: PathBuf,
    pub metrics_csv: PathBuf,
    pub history: Vec<Metrics>,
    pub final_state: TrainState,
    pub frozen_accuracy: f64,
}

fn theta_digest(state: &TrainState) -> String {
    let bytes: Vec<u8> = state.theta().iter().flat_map(|v| v.to_le_bytes()).collect();
    digest_hex(&bytes)
}

pub fn cmd_rescue(opts: &RescueCliOptions) -> Result<RescueSummary> {
    let checkpoint = read_checkpoint(&opts.checkpoint)?;
    let dataset = read_feature_cache(&opts.data)?;
    let parent_run = file_digest(&opts.checkpoint)?;
    let branch_id = digest_hex(
        format!(
            "{parent_run}:k={}:switch={}:total={}",
            opts.k, opts.switch_epoch, opts.total_epochs
        )
        .as_bytes(),
    );
    let branch_dir = opts.out.join(format!("branch-{branch_id}"));
    let ck_dir = branch_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;

    // Accuracy of the frozen circuit before any eigenvalue training: with
    // parity initialization this is the post-switch baseline.
    let hp = Hyperparams {
        lr: opts.lr,
        batch: opts.batch,
        loss: opts.loss,
        threads: opts.threads,
        ..Default::default()
    };
    let ropts = RescueOptions {
        k: opts.k,
        switch_epoch: opts.switch_epoch,
        total_epochs: opts.total_epochs,
        hp,
    };
    let baseline = {
        // Branch state at its initialization point: frozen circuit angles,
        // parity eigenvalues.
        let frozen_cfg = ModelConfig::new(
            checkpoint.cfg.n,
            opts.k,
            checkpoint.cfg.layers,
            Mode::Dano,
            checkpoint.cfg.windows,
            checkpoint.cfg.classes,
        )?;
        let mut probe = TrainState::new_initial(&frozen_cfg, checkpoint.seed)?;
        let theta_len = probe.layout().theta_len;
        probe.params[..theta_len].copy_from_slice(checkpoint.theta());
        evaluate(&probe, &dataset, Split::Test)?
    };

    let metrics_csv = branch_dir.join("metrics.csv");
    let mut csv = std::fs::File::create(&metrics_csv).map_err(|e| Error::io(&metrics_csv, e))?;
    writeln!(
        csv,
        "{METRICS_COLUMNS},branch_id,parent_run,switch_epoch,theta_digest"
    )
    .map_err(|e| Error::io(&metrics_csv, e))?;

    let ck_dir2 = ck_dir.clone();
    let (final_state, history) = rescue(&checkpoint, &dataset, &ropts, |state, m| {
        writeln!(
            csv,
            "{},{branch_id},{parent_run},{},{}",
            metrics_csv_row(m),
            opts.switch_epoch,
            theta_digest(state)
        )
        .map_err(|e| Error::io(&metrics_csv, e))?;
        csv.flush().map_err(|e| Error::io(&metrics_csv, e))?;
        write_checkpoint(&ck_dir2.join(format!("epoch-{:04}.ckpt", m.epoch)), state)?;
        Ok(())
    })?;

    write_kv(
        &branch_dir.join("branch.txt"),
        &[
            ("parent_run".into(), parent_run),
            ("parent_checkpoint".into(), opts.checkpoint.display().to_string()),
            ("switch_epoch".into(), opts.switch_epoch.to_string()),
            ("total_epochs".into(), opts.total_epochs.to_string()),
            ("k".into(), opts.k.to_string()),
            ("frozen_test_accuracy".into(), baseline.to_string()),
        ],
    )?;

    Ok(RescueSummary {
        branch_dir,
        metrics_csv,
        history,
        final_state,
        frozen_accuracy: baseline,
    })
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn cmd_eval(checkpoint: &Path, data: &Path, split: Split) -> Result<f64> {
    let state = read_checkpoint(checkpoint)?;
    let dataset = read_feature_cache(data)?;
    evaluate(&state, &dataset, split)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Trial count for the randomized bound suites.
    pub trials: usize,
    /// Test hook: flips a sign inside the oracle-equivalence suite so the
    /// harness itself can be checked.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: 1000,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub suite: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    /// Machine-readable lines: suite,cases,max_error,tolerance,verdict.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,cases,max_error,tolerance,verdict\n");
        for s in &self.suites {
            out.push_str(&format!(
                "{},{},{:.3e},{:.1e},{}\n",
                s.suite,
                s.cases,
                s.max_error,
                s.tolerance,
                if s.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

fn suite(suite: &str, cases: usize, max_error: f64, tolerance: f64) -> SuiteResult {
    SuiteResult {
        suite: suite.into(),
        cases,
        max_error,
        tolerance,
        passed: max_error <= tolerance,
    }
}

fn random_mode(rng: &mut ChaCha8Rng) -> Mode {
    match rng.random_range(0..3) {
        0 => Mode::Vqc,
        1 => Mode::Dano,
        _ => Mode::Ano,
    }
}

fn random_model(
    rng: &mut ChaCha8Rng,
    n: usize,
    mode: Mode,
) -> Result<(Vec<f64>, CircuitParams, Observables, ModelConfig)> {
    let k = if mode == Mode::Vqc {
        1
    } else {
        rng.random_range(1..=n.min(3))
    };
    let layers = rng.random_range(1..=3);
    let m = rng.random_range(1..=n);
    let cfg = ModelConfig::new(n, k, layers, mode, m, 1)?;
    let params = CircuitParams::random(layers, n, rng);
    let x: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let windows = sliding_windows(n, k, m)?;
    let kdim = 1usize << k;
    let obs = match mode {
        Mode::Ano => {
            let off = kdim * (kdim - 1) / 2;
            Observables::Dense(
                windows
                    .into_iter()
                    .map(|w| {
                        crate::model::DenseObservable::new(
                            (0..kdim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                            (0..off).map(|_| rng.random_range(-1.0..1.0)).collect(),
                            (0..off).map(|_| rng.random_range(-1.0..1.0)).collect(),
                            w,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        Mode::Vqc => Observables::Diagonal(
            windows.into_iter().map(DiagonalObservable::parity).collect(),
        ),
        Mode::Dano => Observables::Diagonal(
            windows
                .into_iter()
                .map(|w| {
                    DiagonalObservable::new(
                        (0..kdim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                        w,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok((x, params, obs, cfg))
}

pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut suites = Vec::new();
    let fault = if opts.inject_fault { -1.0 } else { 1.0 };

    // Simulator expectations against the literal dense-matrix evaluation.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut max_err = 0.0f64;
        let mut cases = 0;
        for n in 2..=6usize {
            for _ in 0..100 {
                let mode = random_mode(&mut rng);
                let (x, params, obs, cfg) = random_model(&mut rng, n, mode)?;
                let z = crate::model::forward(&x, &params, &obs, &cfg)?;
                let m = dense_circuit_matrix(&x, &params, n)?;
                let psi: Vec<num_complex::Complex64> =
                    (0..m.dim()).map(|r| m.get(r, 0)).collect();
                for (j, zj) in z.iter().enumerate() {
                    let h_tilde = match &obs {
                        Observables::Diagonal(list) => DenseMatrix::from_diag(&list[j].lambda),
                        Observables::Dense(list) => {
                            DenseMatrix::from_rows(list[j].kdim(), list[j].unpack())?
                        }
                    };
                    let window = match &obs {
                        Observables::Diagonal(list) => &list[j].window,
                        Observables::Dense(list) => &list[j].window,
                    };
                    let h_full = embed_klocal(&h_tilde, window, n)?;
                    let hpsi = h_full.apply(&psi);
                    let literal: num_complex::Complex64 =
                        psi.iter().zip(&hpsi).map(|(a, b)| a.conj() * b).sum();
                    let err = (fault * zj - literal.re).abs();
                    max_err = max_err.max(err);
                }
                cases += 1;
            }
        }
        suites.push(suite("oracle-equivalence", cases, max_err, 1e-10));
    }

    // Observable-parameter gradients are exactly the marginals.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let mut max_err = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(2..=5);
            let k = rng.random_range(1..=n.min(3));
            let w = sliding_windows(n, k, n)?
                .into_iter()
                .nth(rng.random_range(0..n))
                .unwrap();
            let s = random_state(n, &mut rng)?;
            let g = grad::grad_lambda(&s, &w)?;
            let p = s.marginal_probabilities(&w)?;
            for (a, b) in g.iter().zip(&p) {
                max_err = max_err.max((a - b).abs());
            }
        }
        suites.push(suite("lambda-gradient-identity", 50, max_err, 1e-12));
    }

    // Adjoint vs parameter-shift.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let mut max_err = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(2..=5);
            let mode = random_mode(&mut rng);
            let (x, params, obs, cfg) = random_model(&mut rng, n, mode)?;
            let ps = grad::grad_theta_parameter_shift(&x, &params, &obs, &cfg)?;
            let ad = grad::grad_theta_adjoint(&x, &params, &obs, &cfg)?;
            for (a, b) in ps.flat().iter().zip(ad.flat()) {
                max_err = max_err.max((a - b).abs());
            }
        }
        suites.push(suite("adjoint-vs-parameter-shift", 50, max_err, 1e-9));
    }

    // VQC as the parity special case of DANO.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let mut max_err = 0.0f64;
        for _ in 0..200 {
            let n = rng.random_range(2..=6);
            let layers = rng.random_range(1..=3);
            let m = rng.random_range(1..=n);
            let vqc = ModelConfig::new(n, 1, layers, Mode::Vqc, m, 1)?;
            let dano = ModelConfig::new(n, 1, layers, Mode::Dano, m, 1)?;
            let params = CircuitParams::random(layers, n, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = crate::model::forward(&x, &params, &Observables::initial(&vqc)?, &vqc)?;
            let b = crate::model::forward(&x, &params, &Observables::initial(&dano)?, &dano)?;
            for (x, y) in a.iter().zip(&b) {
                max_err = max_err.max((x - y).abs());
            }
        }
        suites.push(suite("vqc-subset-identity", 200, max_err, 1e-14));
    }

    // Closed-form parameter counts.
    {
        let mut wrong = 0usize;
        let table: &[(Mode, usize, usize)] = &[
            (Mode::Dano, 2, 160),
            (Mode::Dano, 4, 352),
            (Mode::Dano, 6, 1120),
            (Mode::Dano, 8, 4192),
            (Mode::Ano, 2, 352),
            (Mode::Ano, 4, 4192),
            (Mode::Ano, 6, 65632),
            (Mode::Ano, 8, 1048672),
        ];
        for &(mode, k, total) in table {
            let cfg = ModelConfig::new(16, k, 6, mode, 16, 10)?;
            if count_params(&cfg).total != total {
                wrong += 1;
            }
        }
        let baseline = ModelConfig::new(16, 1, 6, Mode::Vqc, 16, 10)?;
        if count_params(&baseline).total != 96 {
            wrong += 1;
        }
        for (k, observable) in [(4usize, 256usize), (6, 1024), (8, 4096), (10, 16384)] {
            let cfg = ModelConfig::new(16, k, 6, Mode::Dano, 16, 10)?;
            if count_params(&cfg).observable != observable {
                wrong += 1;
            }
        }
        suites.push(suite("parameter-count-tables", 13, wrong as f64, 0.0));
    }

    // Diagonal-conjugation perturbation bound.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..opts.trials {
            let dim = rng.random_range(2..=16);
            let u = random_unitary(dim, &mut rng);
            let v = random_unitary(dim, &mut rng);
            let lambda: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r = check_hermitian_bound(&u, &v, &lambda)?;
            worst = worst.max(r.lhs - r.rhs);
        }
        suites.push(suite("observable-perturbation-bound", opts.trials, worst, 1e-9));
    }

    // Rayleigh-quotient output bounds.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(106);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..opts.trials {
            let n = rng.random_range(1..=6);
            let k = rng.random_range(1..=n.min(4));
            let kdim = 1usize << k;
            let w = sliding_windows(n, k, n)?
                .into_iter()
                .nth(rng.random_range(0..n))
                .unwrap();
            let s = random_state(n, &mut rng)?;
            let lambda: Vec<f64> = (0..kdim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let z = crate::model::expect_diagonal(
                &s,
                &DiagonalObservable::new(lambda.clone(), w)?,
            )?;
            let lo = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((lo - z).max(z - hi));
        }
        suites.push(suite("rayleigh-bound", opts.trials, worst, 1e-12));
    }

    // Marginals equal the reduced-density-matrix diagonal.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let mut max_err = 0.0f64;
        let mut cases = 0;
        for n in 2..=6usize {
            for _ in 0..10 {
                let s = random_state(n, &mut rng)?;
                for k in 1..=n {
                    let w = sliding_windows(n, k, 1)?.pop().unwrap();
                    let p = s.marginal_probabilities(&w)?;
                    let rho = s.reduced_density_matrix(&w)?;
                    let kdim = 1usize << k;
                    for m in 0..kdim {
                        max_err = max_err.max((p[m] - rho[m * kdim + m].re).abs());
                    }
                    cases += 1;
                }
            }
        }
        suites.push(suite("marginal-rdm-consistency", cases, max_err, 1e-12));
    }

    Ok(VerifyReport { suites })
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub n: usize,
    pub ks: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Extra (n, k) cells beyond the main grid.
    pub extra: Vec<(usize, usize)>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            n: 12,
            ks: vec![2, 4, 6, 8],
            reps: 5,
            seed: 7,
            extra: vec![(16, 8)],
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub dano_ms: f64,
    pub ano_ms: f64,
    pub ratio: f64,
    pub dano_flops: u64,
    pub ano_flops: u64,
}

/// Measurement-side flop counts over all n sliding windows.
pub fn measurement_flops(n: usize, k: usize) -> (u64, u64) {
    let dano = (n as u64) << n;
    let ano = (n as u64) << (n + k);
    (dano, ano)
}

pub fn cmd_bench(opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let mut cells: Vec<(usize, usize)> = opts.ks.iter().map(|&k| (opts.n, k)).collect();
    cells.extend(opts.extra.iter().copied());
    for (n, k) in cells {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let state = random_state(n, &mut rng)?;
        let windows = sliding_windows(n, k, n)?;
        let kdim = 1usize << k;
        let parity = crate::model::parity_eigenvalues(k);
        let h: Vec<num_complex::Complex64> = {
            let mut m = vec![num_complex::Complex64::ZERO; kdim * kdim];
            for (i, &l) in parity.iter().enumerate() {
                m[i * kdim + i] = num_complex::Complex64::new(l, 0.0);
            }
            m
        };

        // Warm both measurement paths once so allocator effects stay out of
        // the timed region.
        for w in &windows {
            std::hint::black_box(state.marginal_probabilities(w)?);
            std::hint::black_box(state.reduced_density_matrix(w)?);
        }

        // Diagonal route: one marginal pass per window.
        let t0 = std::time::Instant::now();
        let mut sink = 0.0;
        for _ in 0..opts.reps {
            for w in &windows {
                let p = state.marginal_probabilities(w)?;
                sink += p.iter().zip(&parity).map(|(p, l)| p * l).sum::<f64>();
            }
        }
        let dano_ms = t0.elapsed().as_secs_f64() * 1e3 / opts.reps as f64;

        // Dense route: reduced density matrix plus trace per window.
        let t0 = std::time::Instant::now();
        for _ in 0..opts.reps {
            for w in &windows {
                let rho = state.reduced_density_matrix(w)?;
                let mut val = num_complex::Complex64::ZERO;
                for a in 0..kdim {
                    for b in 0..kdim {
                        val += rho[a * kdim + b] * h[b * kdim + a];
                    }
                }
                sink += val.re;
            }
        }
        let ano_ms = t0.elapsed().as_secs_f64() * 1e3 / opts.reps as f64;
        std::hint::black_box(sink);

        let (dano_flops, ano_flops) = measurement_flops(n, k);
        rows.push(BenchRow {
            n,
            k,
            dano_ms,
            ano_ms,
            ratio: ano_ms / dano_ms,
            dano_flops,
            ano_flops,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,k,dano_ms,ano_ms,ratio,dano_flops,ano_flops\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.2},{},{}\n",
            r.n, r.k, r.dano_ms, r.ano_ms, r.ratio, r.dano_flops, r.ano_flops
        ));
    }
    out
}
