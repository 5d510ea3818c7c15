//! Model definition: angle encoding, brickwork variational ansatz, the
//! observable families (fixed Pauli-Z, trainable diagonal, trainable dense
//! Hermitian), and the end-to-end forward pass.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{QubitWindow, StateVector, MAX_QUBITS};

/// Which observable family the model trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Fixed single-qubit Pauli-Z readout; only circuit angles train.
    Vqc,
    /// Trainable diagonal k-local observables (2^k parameters per window).
    Dano,
    /// Trainable dense k-local Hermitian observables (4^k parameters per window).
    Ano,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Vqc => "vqc",
            Mode::Dano => "dano",
            Mode::Ano => "ano",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vqc" => Ok(Mode::Vqc),
            "dano" => Ok(Mode::Dano),
            "ano" => Ok(Mode::Ano),
            other => Err(Error::Validation(format!(
                "unknown mode '{other}' (expected vqc, dano or ano)"
            ))),
        }
    }
}

/// Static model shape: qubits, observable locality, circuit depth, mode,
/// window count and class count.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub n: usize,
    pub k: usize,
    pub layers: usize,
    pub mode: Mode,
    pub windows: usize,
    pub classes: usize,
}

impl ModelConfig {
    pub fn new(
        n: usize,
        k: usize,
        layers: usize,
        mode: Mode,
        windows: usize,
        classes: usize,
    ) -> Result<Self> {
        let cfg = ModelConfig {
            n,
            k,
            layers,
            mode,
            windows,
            classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every violated constraint, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 1 || self.n > MAX_QUBITS {
            problems.push(format!("qubits must be in 1..={MAX_QUBITS}, got {}", self.n));
        }
        if self.k < 1 || self.k > self.n {
            problems.push(format!("locality k must be in 1..=n={}, got {}", self.n, self.k));
        }
        if self.windows < 1 || self.windows > self.n {
            problems.push(format!(
                "window count must be in 1..=n={}, got {}",
                self.n, self.windows
            ));
        }
        if self.classes < 1 || self.classes > self.windows {
            problems.push(format!(
                "class count must be in 1..=windows={}, got {}",
                self.windows, self.classes
            ));
        }
        if self.mode == Mode::Vqc && self.k != 1 {
            problems.push(format!("mode=vqc forces k=1, got k={}", self.k));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn kdim(&self) -> usize {
        1 << self.k
    }
}

/// Circuit angles, layer-major: theta[(l, j)] for layer l and wire j (0-based).
#[derive(Clone, Debug)]
pub struct CircuitParams {
    theta: Vec<f64>,
    layers: usize,
    qubits: usize,
}

impl CircuitParams {
    pub fn new(theta: Vec<f64>, layers: usize, qubits: usize) -> Result<Self> {
        if theta.len() != layers * qubits {
            return Err(Error::Shape(format!(
                "expected {layers}x{qubits} = {} angles, got {}",
                layers * qubits,
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("circuit angles must be finite".into()));
        }
        Ok(CircuitParams {
            theta,
            layers,
            qubits,
        })
    }

    pub fn zeros(layers: usize, qubits: usize) -> Self {
        CircuitParams {
            theta: vec![0.0; layers * qubits],
            layers,
            qubits,
        }
    }

    /// I.i.d. uniform angles on (-pi, pi).
    pub fn random(layers: usize, qubits: usize, rng: &mut impl rand::Rng) -> Self {
        let theta = (0..layers * qubits)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        CircuitParams {
            theta,
            layers,
            qubits,
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    /// Angle for 0-based (layer, wire).
    #[inline]
    pub fn theta(&self, layer: usize, wire: usize) -> f64 {
        self.theta[layer * self.qubits + wire]
    }

    pub fn flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.theta.len() {
            return Err(Error::Shape(format!(
                "expected {} angles, got {}",
                self.theta.len(),
                values.len()
            )));
        }
        self.theta.copy_from_slice(values);
        Ok(())
    }
}

/// Diagonal k-local observable: 2^k real eigenvalues on a qubit window.
#[derive(Clone, Debug)]
pub struct DiagonalObservable {
    pub lambda: Vec<f64>,
    pub window: QubitWindow,
}

impl DiagonalObservable {
    pub fn new(lambda: Vec<f64>, window: QubitWindow) -> Result<Self> {
        if lambda.len() != 1 << window.width() {
            return Err(Error::Shape(format!(
                "window width {} needs {} eigenvalues, got {}",
                window.width(),
                1usize << window.width(),
                lambda.len()
            )));
        }
        if lambda.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("eigenvalues must be finite".into()));
        }
        Ok(DiagonalObservable { lambda, window })
    }

    /// Eigenvalues of Z^(x)k: +1/-1 by bit parity. With k=1 this is exactly a
    /// Pauli-Z readout, so models initialized this way start at the fixed-
    /// measurement baseline.
    pub fn parity(window: QubitWindow) -> Self {
        let lambda = parity_eigenvalues(window.width());
        DiagonalObservable { lambda, window }
    }
}

pub fn parity_eigenvalues(k: usize) -> Vec<f64> {
    (0..1usize << k)
        .map(|m| if m.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

/// Dense k-local Hermitian observable packed as real parameters: diagonal
/// entries, then the upper triangle's real parts, then its imaginary parts
/// (row-major pair order (0,1), (0,2), .., (1,2), ..).
#[derive(Clone, Debug)]
pub struct DenseObservable {
    pub diag: Vec<f64>,
    pub upper_re: Vec<f64>,
    pub upper_im: Vec<f64>,
    pub window: QubitWindow,
}

/// Flat index of pair (i, j), i < j, in the packed upper triangle.
#[inline]
pub fn upper_index(i: usize, j: usize, kdim: usize) -> usize {
    debug_assert!(i < j && j < kdim);
    i * kdim - i * (i + 1) / 2 + (j - i - 1)
}

impl DenseObservable {
    pub fn new(
        diag: Vec<f64>,
        upper_re: Vec<f64>,
        upper_im: Vec<f64>,
        window: QubitWindow,
    ) -> Result<Self> {
        let kdim = 1usize << window.width();
        let off = kdim * (kdim - 1) / 2;
        if diag.len() != kdim || upper_re.len() != off || upper_im.len() != off {
            return Err(Error::Shape(format!(
                "K={kdim} packing needs {kdim} diagonal and {off}+{off} off-diagonal reals, \
                 got {}/{}/{}",
                diag.len(),
                upper_re.len(),
                upper_im.len()
            )));
        }
        for v in diag.iter().chain(&upper_re).chain(&upper_im) {
            if !v.is_finite() {
                return Err(Error::Validation("observable parameters must be finite".into()));
            }
        }
        Ok(DenseObservable {
            diag,
            upper_re,
            upper_im,
            window,
        })
    }

    /// Z^(x)k as a dense observable: parity diagonal, zero off-diagonals.
    pub fn parity(window: QubitWindow) -> Self {
        let kdim = 1usize << window.width();
        let off = kdim * (kdim - 1) / 2;
        DenseObservable {
            diag: parity_eigenvalues(window.width()),
            upper_re: vec![0.0; off],
            upper_im: vec![0.0; off],
            window,
        }
    }

    pub fn kdim(&self) -> usize {
        1 << self.window.width()
    }

    /// Number of packed real parameters (K^2).
    pub fn param_len(&self) -> usize {
        let kdim = self.kdim();
        kdim * kdim
    }

    /// Unpacks into the explicit K x K complex matrix, Hermitian by
    /// construction.
    pub fn unpack(&self) -> Vec<Complex64> {
        let kdim = self.kdim();
        let mut m = vec![Complex64::ZERO; kdim * kdim];
        for i in 0..kdim {
            m[i * kdim + i] = Complex64::new(self.diag[i], 0.0);
            for j in i + 1..kdim {
                let u = upper_index(i, j, kdim);
                let v = Complex64::new(self.upper_re[u], self.upper_im[u]);
                m[i * kdim + j] = v;
                m[j * kdim + i] = v.conj();
            }
        }
        m
    }

    /// Packed layout: [diag | upper_re | upper_im].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend_from_slice(&self.diag);
        out.extend_from_slice(&self.upper_re);
        out.extend_from_slice(&self.upper_im);
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_len() {
            return Err(Error::Shape(format!(
                "expected {} packed parameters, got {}",
                self.param_len(),
                values.len()
            )));
        }
        let kdim = self.kdim();
        let off = kdim * (kdim - 1) / 2;
        self.diag.copy_from_slice(&values[..kdim]);
        self.upper_re.copy_from_slice(&values[kdim..kdim + off]);
        self.upper_im.copy_from_slice(&values[kdim + off..]);
        Ok(())
    }
}

/// The measurement side of a model: one observable per sliding window.
#[derive(Clone, Debug)]
pub enum Observables {
    Diagonal(Vec<DiagonalObservable>),
    Dense(Vec<DenseObservable>),
}

impl Observables {
    /// Initial observables for a config: parity eigenvalues everywhere, so
    /// every mode starts at a Pauli-Z-like readout.
    pub fn initial(cfg: &ModelConfig) -> Result<Self> {
        let windows = sliding_windows(cfg.n, cfg.k, cfg.windows)?;
        Ok(match cfg.mode {
            Mode::Vqc | Mode::Dano => Observables::Diagonal(
                windows.into_iter().map(DiagonalObservable::parity).collect(),
            ),
            Mode::Ano => {
                Observables::Dense(windows.into_iter().map(DenseObservable::parity).collect())
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Observables::Diagonal(v) => v.len(),
            Observables::Dense(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable parameter count (zero for the fixed-readout VQC).
    pub fn trainable_len(&self, mode: Mode) -> usize {
        match (mode, self) {
            (Mode::Vqc, _) => 0,
            (Mode::Dano, Observables::Diagonal(v)) => v.iter().map(|o| o.lambda.len()).sum(),
            (Mode::Ano, Observables::Dense(v)) => v.iter().map(|o| o.param_len()).sum(),
            _ => 0,
        }
    }
}

/// Cyclic sliding windows Q_j = (j, j+1, .., j+k-1) mod n, for j = 1..m.
pub fn sliding_windows(n: usize, k: usize, m: usize) -> Result<Vec<QubitWindow>> {
    if k > n {
        return Err(Error::Validation(format!(
            "window width k={k} exceeds qubit count n={n}"
        )));
    }
    if m > n {
        return Err(Error::Validation(format!(
            "window count m={m} exceeds qubit count n={n}"
        )));
    }
    (1..=m)
        .map(|j| QubitWindow::new((0..k).map(|t| ((j - 1 + t) % n) + 1).collect()))
        .collect()
}

/// Angle encoding: Hadamard on every wire, then Ry(x_j) on wire j.
pub fn encode(x: &[f64], n: usize) -> Result<StateVector> {
    if x.len() != n {
        return Err(Error::Shape(format!(
            "input has {} features but the register has {n} qubits",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("input features must be finite".into()));
    }
    let mut s = StateVector::new_zero(n)?;
    for q in 1..=n {
        s.apply_hadamard(q)?;
    }
    for (j, &xj) in x.iter().enumerate() {
        s.apply_ry(j + 1, xj)?;
    }
    Ok(s)
}

/// Brickwork CNOT pairs for one entangling layer: (1,2),(3,4),.. then the
/// shifted row (2,3),(4,5),..; no wrap-around.
pub(crate) fn brickwork_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut q = 1;
    while q + 1 <= n {
        pairs.push((q, q + 1));
        q += 2;
    }
    let mut q = 2;
    while q + 1 <= n {
        pairs.push((q, q + 1));
        q += 2;
    }
    pairs
}

/// Applies L variational layers: per layer, both CNOT sublayers, then
/// Ry(theta_j) on every wire.
pub fn variational_layers(state: &mut StateVector, params: &CircuitParams) -> Result<()> {
    if params.qubits() != state.n() {
        return Err(Error::Shape(format!(
            "parameters are shaped for {} qubits but the state has {}",
            params.qubits(),
            state.n()
        )));
    }
    let n = state.n();
    let pairs = brickwork_pairs(n);
    for l in 0..params.layers() {
        for &(c, t) in &pairs {
            state.apply_cnot(c, t)?;
        }
        for j in 0..n {
            state.apply_ry(j + 1, params.theta(l, j))?;
        }
    }
    Ok(())
}

/// Expectation of a diagonal observable: sum_m lambda_m p_m over the window
/// marginal. O(2^n) per window.
pub fn expect_diagonal(state: &StateVector, obs: &DiagonalObservable) -> Result<f64> {
    let p = state.marginal_probabilities(&obs.window)?;
    if p.len() != obs.lambda.len() {
        return Err(Error::Shape(format!(
            "observable has {} eigenvalues for a width-{} window",
            obs.lambda.len(),
            obs.window.width()
        )));
    }
    Ok(obs.lambda.iter().zip(&p).map(|(l, p)| l * p).sum())
}

/// Expectation of a dense k-local observable via tr(rho_w H). O(2^(n+k)).
pub fn expect_dense(state: &StateVector, obs: &DenseObservable) -> Result<f64> {
    let rho = state.reduced_density_matrix(&obs.window)?;
    let h = obs.unpack();
    let kdim = obs.kdim();
    let mut val = Complex64::ZERO;
    for a in 0..kdim {
        for b in 0..kdim {
            val += rho[a * kdim + b] * h[b * kdim + a];
        }
    }
    if val.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "expectation of a Hermitian observable came out complex (im = {})",
            val.im
        )));
    }
    Ok(val.re)
}

/// End-to-end forward pass: encode, run the ansatz, measure every window.
pub fn forward(
    x: &[f64],
    params: &CircuitParams,
    obs: &Observables,
    cfg: &ModelConfig,
) -> Result<Vec<f64>> {
    if params.layers() != cfg.layers || params.qubits() != cfg.n {
        return Err(Error::Shape(format!(
            "parameters shaped ({}, {}) but config wants ({}, {})",
            params.layers(),
            params.qubits(),
            cfg.layers,
            cfg.n
        )));
    }
    let mut state = encode(x, cfg.n)?;
    variational_layers(&mut state, params)?;
    match obs {
        Observables::Diagonal(list) => {
            list.iter().map(|o| expect_diagonal(&state, o)).collect()
        }
        Observables::Dense(list) => list.iter().map(|o| expect_dense(&state, o)).collect(),
    }
}

/// Trainable parameter counts implied by a config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub circuit: usize,
    pub observable: usize,
    pub total: usize,
}

pub fn count_params(cfg: &ModelConfig) -> ParamCounts {
    let circuit = cfg.layers * cfg.n;
    let observable = match cfg.mode {
        Mode::Vqc => 0,
        Mode::Dano => cfg.windows << cfg.k,
        Mode::Ano => cfg.windows << (2 * cfg.k),
    };
    ParamCounts {
        circuit,
        observable,
        total: circuit + observable,
    }
}
