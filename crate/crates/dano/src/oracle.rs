//! Brute-force dense-matrix reference path: explicit circuit matrices built
//! from Kronecker products, literal expectation values, spectral norms via
//! power iteration, and the observable perturbation bound check. Test and
//! `verify` code only; never on the training hot path.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::CircuitParams;
use crate::sim::{QubitWindow, StateVector};

/// Memory guard: 2^10 keeps the largest oracle matrix at 16 MiB.
pub const ORACLE_MAX_QUBITS: usize = 10;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        DenseMatrix {
            dim,
            entries: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = Complex64::ONE;
        }
        m
    }

    pub fn from_rows(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "expected {dim}x{dim} = {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(DenseMatrix { dim, entries })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * dim + i] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.entries[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.entries[r * self.dim + c] = v;
    }

    pub fn mul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == Complex64::ZERO {
                    continue;
                }
                let row = &rhs.entries[k * d..(k + 1) * d];
                let dst = &mut out.entries[i * d..(i + 1) * d];
                for (o, &b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> DenseMatrix {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.entries[c * d + r] = self.entries[r * d + c].conj();
            }
        }
        out
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim);
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a - b)
            .collect();
        DenseMatrix {
            dim: self.dim,
            entries,
        }
    }

    pub fn kron(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let (da, db) = (self.dim, rhs.dim);
        let dim = da * db;
        let mut out = Self::zeros(dim);
        for ia in 0..da {
            for ja in 0..da {
                let a = self.entries[ia * da + ja];
                if a == Complex64::ZERO {
                    continue;
                }
                for ib in 0..db {
                    for jb in 0..db {
                        out.entries[(ia * db + ib) * dim + (ja * db + jb)] =
                            a * rhs.entries[ib * db + jb];
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let d = self.dim;
        (0..d)
            .map(|r| {
                self.entries[r * d..(r + 1) * d]
                    .iter()
                    .zip(v)
                    .map(|(m, x)| m * x)
                    .sum()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Max-norm of M†M - I.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().mul(self).sub(&Self::identity(self.dim)).max_abs()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }
}

fn hadamard_2x2() -> DenseMatrix {
    DenseMatrix::from_rows(
        2,
        vec![
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(-FRAC_1_SQRT_2, 0.0),
        ],
    )
    .unwrap()
}

fn ry_2x2(angle: f64) -> DenseMatrix {
    let (s, c) = (angle / 2.0).sin_cos();
    DenseMatrix::from_rows(
        2,
        vec![
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ],
    )
    .unwrap()
}

/// CNOT on an adjacent pair, control on the more significant qubit.
fn cnot_4x4() -> DenseMatrix {
    let mut m = DenseMatrix::zeros(4);
    m.set(0, 0, Complex64::ONE);
    m.set(1, 1, Complex64::ONE);
    m.set(2, 3, Complex64::ONE);
    m.set(3, 2, Complex64::ONE);
    m
}

fn kron_all(factors: &[DenseMatrix]) -> DenseMatrix {
    let mut out = DenseMatrix::identity(1);
    for f in factors {
        out = out.kron(f);
    }
    out
}

fn check_oracle_capacity(n: usize) -> Result<()> {
    if n < 1 || n > ORACLE_MAX_QUBITS {
        return Err(Error::Capacity {
            requested: n,
            max: ORACLE_MAX_QUBITS,
        });
    }
    Ok(())
}

/// Full-register CNOT sublayer as a Kronecker product of 4x4 blocks and
/// identities; `offset` 0 gives pairs (1,2),(3,4),.. and 1 gives (2,3),(4,5),..
fn cnot_sublayer(n: usize, offset: usize) -> DenseMatrix {
    let mut factors = Vec::new();
    if offset == 1 {
        factors.push(DenseMatrix::identity(2));
    }
    let mut q = 1 + offset;
    while q + 1 <= n {
        factors.push(cnot_4x4());
        q += 2;
    }
    if q <= n {
        factors.push(DenseMatrix::identity(2));
    }
    kron_all(&factors)
}

/// Explicit 2^n x 2^n matrix of U(theta) V(x): Hadamard layer, encoding
/// rotations, then per layer both CNOT sublayers and the rotation row.
pub fn dense_circuit_matrix(x: &[f64], params: &CircuitParams, n: usize) -> Result<DenseMatrix> {
    check_oracle_capacity(n)?;
    if x.len() != n || params.qubits() != n {
        return Err(Error::Shape(format!(
            "input ({}) and parameters ({}) must both cover {n} qubits",
            x.len(),
            params.qubits()
        )));
    }
    let h_layer = kron_all(&vec![hadamard_2x2(); n]);
    let enc_layer = kron_all(&x.iter().map(|&xj| ry_2x2(xj)).collect::<Vec<_>>());
    let mut m = enc_layer.mul(&h_layer);
    for l in 0..params.layers() {
        m = cnot_sublayer(n, 0).mul(&m);
        m = cnot_sublayer(n, 1).mul(&m);
        let rot =
            kron_all(&(0..n).map(|j| ry_2x2(params.theta(l, j))).collect::<Vec<_>>());
        m = rot.mul(&m);
    }
    Ok(m)
}

/// Literal expectation <0..0| M† H M |0..0>; errors if H is not Hermitian and
/// asserts the imaginary residue stays below 1e-10.
pub fn dense_expectation(
    x: &[f64],
    params: &CircuitParams,
    h_full: &DenseMatrix,
    n: usize,
) -> Result<f64> {
    if h_full.hermiticity_defect() > 1e-10 {
        return Err(Error::Validation(
            "observable matrix is not Hermitian within 1e-10".into(),
        ));
    }
    let m = dense_circuit_matrix(x, params, n)?;
    if h_full.dim() != m.dim() {
        return Err(Error::Shape(format!(
            "observable dim {} does not match circuit dim {}",
            h_full.dim(),
            m.dim()
        )));
    }
    // psi = M e_0 is the first column of M.
    let psi: Vec<Complex64> = (0..m.dim()).map(|r| m.get(r, 0)).collect();
    let hpsi = h_full.apply(&psi);
    let val: Complex64 = psi.iter().zip(&hpsi).map(|(a, b)| a.conj() * b).sum();
    if val.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "expectation has imaginary residue {}",
            val.im
        )));
    }
    Ok(val.re)
}

/// Embeds a K x K window operator into the full register: acts as `h_tilde`
/// on the window qubits (in window order) and as identity elsewhere. Wrapped
/// windows are handled by an explicit index permutation, which moves entries
/// without arithmetic, so contiguous windows equal the literal Kronecker
/// product exactly.
pub fn embed_klocal(h_tilde: &DenseMatrix, w: &QubitWindow, n: usize) -> Result<DenseMatrix> {
    check_oracle_capacity(n)?;
    w.validate_for(n)?;
    let k = w.width();
    if h_tilde.dim() != 1 << k {
        return Err(Error::Shape(format!(
            "window of width {k} needs a {}x{} operator, got dim {}",
            1usize << k,
            1usize << k,
            h_tilde.dim()
        )));
    }
    // Source layout: window qubits first (in window order), then the rest in
    // ascending index order.
    let mut order: Vec<usize> = w.qubits().to_vec();
    for q in 1..=n {
        if !w.qubits().contains(&q) {
            order.push(q);
        }
    }
    // perm[i] = index of the basis state obtained by routing source bit s to
    // target qubit order[s].
    let dim = 1usize << n;
    let mut perm = vec![0usize; dim];
    for (i, p) in perm.iter_mut().enumerate() {
        let mut j = 0usize;
        for (s, &q) in order.iter().enumerate() {
            let bit = (i >> (n - 1 - s)) & 1;
            j |= bit << (n - q);
        }
        *p = j;
    }
    let a = h_tilde.kron(&DenseMatrix::identity(1 << (n - k)));
    let mut out = DenseMatrix::zeros(dim);
    for r in 0..dim {
        for c in 0..dim {
            let v = a.get(r, c);
            if v != Complex64::ZERO {
                out.set(perm[r], perm[c], v);
            }
        }
    }
    Ok(out)
}

/// Largest singular value via power iteration on M†M. Deterministic start
/// vector, relative tolerance 1e-10, iteration cap 10,000.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    const REL_TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 10_000;
    let d = m.dim();
    if m.entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Validation("matrix entries must be finite".into()));
    }
    let b = m.adjoint().mul(m); // Hermitian PSD
    if b.max_abs() == 0.0 {
        return Ok(0.0);
    }
    // Deterministic pseudo-random start (splitmix64 stream).
    let mut seed = 0x9e3779b97f4a7c15u64 ^ (d as u64);
    let mut next = || {
        seed = seed.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = seed;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as f64 / u64::MAX as f64 - 0.5
    };
    let mut v: Vec<Complex64> = (0..d).map(|_| Complex64::new(next(), next())).collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut v {
        *c /= norm;
    }
    let mut lambda = 0.0f64;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let w = b.apply(&v);
        let new_lambda: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        let wn = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if wn == 0.0 {
            return Ok(0.0);
        }
        let mut vnext = w;
        for c in &mut vnext {
            *c /= wn;
        }
        residual = (new_lambda - lambda).abs();
        v = vnext;
        lambda = new_lambda;
        if residual <= REL_TOL * lambda.max(f64::MIN_POSITIVE) {
            return Ok(lambda.max(0.0).sqrt());
        }
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {MAX_ITERS} iterations \
         (last eigenvalue change {residual:.3e})"
    )))
}

/// Result of one observable perturbation bound trial:
/// lhs = ||U†ΛU - V†ΛV||, rhs = 2 ||Λ|| ||U - V||.
#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Spectral norm of a Hermitian matrix: largest |eigenvalue| via the exact
/// Jacobi route. Unlike power iteration this cannot stall on degenerate or
/// clustered spectra, which random bound-check operands routinely have.
pub fn hermitian_spectral_norm(m: &DenseMatrix) -> Result<f64> {
    let d = m.dim();
    let mut real = vec![0.0f64; (2 * d) * (2 * d)];
    for r in 0..d {
        for c in 0..d {
            let v = m.get(r, c);
            real[r * 2 * d + c] = v.re;
            real[r * 2 * d + (c + d)] = -v.im;
            real[(r + d) * 2 * d + c] = v.im;
            real[(r + d) * 2 * d + (c + d)] = v.re;
        }
    }
    let eig = symmetric_eigenvalues(&real, 2 * d)?;
    Ok(eig[0].abs().max(eig[eig.len() - 1].abs()))
}

/// Checks the diagonal-conjugation perturbation bound for unitaries U, V and
/// a diagonal Λ. Inputs must be unitary within 1e-10. Both sides reduce to
/// Hermitian spectral norms (the difference of conjugated diagonals is
/// Hermitian; ||U - V|| comes from the Gram matrix (U-V)†(U-V)), so the
/// exact eigenvalue route is used throughout.
pub fn check_hermitian_bound(
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda: &[f64],
) -> Result<BoundCheck> {
    if u.dim() != v.dim() || u.dim() != lambda.len() {
        return Err(Error::Shape(format!(
            "dimension mismatch: U {}x{}, V {}x{}, diag {}",
            u.dim(),
            u.dim(),
            v.dim(),
            v.dim(),
            lambda.len()
        )));
    }
    if u.unitarity_defect() > 1e-10 || v.unitarity_defect() > 1e-10 {
        return Err(Error::Validation(
            "bound check requires unitary inputs (within 1e-10)".into(),
        ));
    }
    let lam = DenseMatrix::from_diag(lambda);
    let hu = u.adjoint().mul(&lam).mul(u);
    let hv = v.adjoint().mul(&lam).mul(v);
    let lhs = hermitian_spectral_norm(&hu.sub(&hv))?;
    // Spectral norm of a diagonal matrix is its largest |entry|.
    let lam_norm = lambda.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let diff = u.sub(v);
    let gram = diff.adjoint().mul(&diff);
    let rhs = 2.0 * lam_norm * hermitian_spectral_norm(&gram)?.max(0.0).sqrt();
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// ascending. Test-scale tool (dims up to a few hundred).
pub fn symmetric_eigenvalues(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    if a.len() != dim * dim {
        return Err(Error::Shape(format!(
            "expected {dim}x{dim} matrix, got {} entries",
            a.len()
        )));
    }
    let mut m = a.to_vec();
    let max_sweeps = 100;
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..dim {
            for q in p + 1..dim {
                off += m[p * dim + q] * m[p * dim + q];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = m[p * dim + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..dim {
                    let aip = m[i * dim + p];
                    let aiq = m[i * dim + q];
                    m[i * dim + p] = c * aip - s * aiq;
                    m[i * dim + q] = s * aip + c * aiq;
                }
                for j in 0..dim {
                    let apj = m[p * dim + j];
                    let aqj = m[q * dim + j];
                    m[p * dim + j] = c * apj - s * aqj;
                    m[q * dim + j] = s * apj + c * aqj;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..dim).map(|i| m[i * dim + i]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}

/// Smallest eigenvalue of a Hermitian matrix via the real symmetric embedding
/// [[Re, -Im], [Im, Re]] (eigenvalues appear twice; the minimum is shared).
pub fn hermitian_min_eigenvalue(m: &DenseMatrix) -> Result<f64> {
    let d = m.dim();
    let mut real = vec![0.0f64; (2 * d) * (2 * d)];
    for r in 0..d {
        for c in 0..d {
            let v = m.get(r, c);
            real[r * 2 * d + c] = v.re;
            real[r * 2 * d + (c + d)] = -v.im;
            real[(r + d) * 2 * d + c] = v.im;
            real[(r + d) * 2 * d + (c + d)] = v.re;
        }
    }
    let eig = symmetric_eigenvalues(&real, 2 * d)?;
    Ok(eig[0])
}

/// Haar-like random unitary: complex Gaussian matrix orthonormalized by
/// modified Gram-Schmidt.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> DenseMatrix {
    use rand_distr::StandardNormal;
    let mut cols: Vec<Vec<Complex64>> = (0..dim)
        .map(|_| {
            (0..dim)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect()
        })
        .collect();
    for j in 0..dim {
        for i in 0..j {
            let proj: Complex64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
            for r in 0..dim {
                let correction = proj * cols[i][r];
                cols[j][r] -= correction;
            }
        }
        let norm = cols[j].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in &mut cols[j] {
            *c /= norm;
        }
    }
    let mut m = DenseMatrix::zeros(dim);
    for (j, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            m.set(r, j, v);
        }
    }
    m
}

/// Random normalized pure state.
pub fn random_state(n: usize, rng: &mut impl Rng) -> Result<StateVector> {
    use rand_distr::StandardNormal;
    let dim = 1usize << n;
    let mut amps: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    StateVector::from_amplitudes(n, amps)
}
