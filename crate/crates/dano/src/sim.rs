//! Dense statevector engine: gate kernels, marginal probabilities, and
//! reduced density matrices.
//!
//! Basis convention: qubit 1 is the MOST significant bit of the basis index,
//! so |q1 q2 .. qn> maps to the integer q1*2^(n-1) + .. + qn. Qubit indices
//! are 1-based everywhere in the public API.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on the simulated register size (2^24 amplitudes = 256 MiB).
pub const MAX_QUBITS: usize = 24;

const NORM_TOL: f64 = 1e-9;

/// Bit position (from the least significant end) of 1-based qubit `q`.
#[inline]
pub(crate) fn bit_of(n: usize, q: usize) -> usize {
    n - q
}

/// Full 2^n-amplitude pure state of an n-qubit register.
#[derive(Clone, Debug)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros computational basis state |0..0>.
    pub fn new_zero(n: usize) -> Result<Self> {
        if n < 1 || n > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: n,
                max: MAX_QUBITS,
            });
        }
        let mut amps = vec![Complex64::ZERO; 1 << n];
        amps[0] = Complex64::ONE;
        Ok(StateVector { n, amps })
    }

    /// Wraps an explicit amplitude vector; must already be normalized.
    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        if n < 1 || n > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: n,
                max: MAX_QUBITS,
            });
        }
        if amps.len() != 1 << n {
            return Err(Error::Shape(format!(
                "expected 2^{} = {} amplitudes, got {}",
                n,
                1usize << n,
                amps.len()
            )));
        }
        let s = StateVector { n, amps };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!(
                "amplitude vector is not normalized: |psi|^2 = {norm}"
            )));
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<usize> {
        if q < 1 || q > self.n {
            return Err(Error::QubitIndex {
                index: q,
                qubits: self.n,
            });
        }
        Ok(bit_of(self.n, q))
    }

    /// Hadamard on wire `q`.
    pub fn apply_hadamard(&mut self, q: usize) -> Result<()> {
        let bit = self.check_qubit(q)?;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        apply_1q_real(&mut self.amps, bit, h, h, h, -h);
        Ok(())
    }

    /// Y-rotation Ry(angle) = [[cos a/2, -sin a/2], [sin a/2, cos a/2]] on wire `q`.
    pub fn apply_ry(&mut self, q: usize, angle: f64) -> Result<()> {
        let bit = self.check_qubit(q)?;
        if !angle.is_finite() {
            return Err(Error::Validation(format!(
                "rotation angle must be finite, got {angle}"
            )));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        apply_1q_real(&mut self.amps, bit, c, -s, s, c);
        Ok(())
    }

    /// CNOT with the given control and target wires.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::Validation(format!(
                "cnot control and target must differ (both {control})"
            )));
        }
        let cbit = self.check_qubit(control)?;
        let tbit = self.check_qubit(target)?;
        apply_cnot_bits(&mut self.amps, cbit, tbit);
        Ok(())
    }

    /// Probabilities of the 2^k outcomes on the window qubits, window-ordered
    /// (first window qubit = most significant outcome bit). Single pass over
    /// all 2^n amplitudes.
    pub fn marginal_probabilities(&self, w: &QubitWindow) -> Result<Vec<f64>> {
        w.validate_for(self.n)?;
        let shifts = w.bit_shifts(self.n);
        let mut probs = vec![0.0; 1 << shifts.len()];
        for (i, a) in self.amps.iter().enumerate() {
            probs[window_value(i, &shifts)] += a.norm_sqr();
        }
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Ok(probs)
    }

    /// Partial trace over all qubits outside the window: 2^k x 2^k Hermitian
    /// matrix in row-major order, indexed by window-ordered bit patterns.
    /// Cost O(2^(n+k)).
    pub fn reduced_density_matrix(&self, w: &QubitWindow) -> Result<Vec<Complex64>> {
        w.validate_for(self.n)?;
        let n = self.n;
        let shifts = w.bit_shifts(n);
        let k = shifts.len();
        let kdim = 1usize << k;
        let rest_bits: Vec<usize> = (0..n).rev().filter(|b| !shifts.contains(b)).collect();
        let rdim = 1usize << rest_bits.len();

        // Group amplitudes by environment index, then accumulate one outer
        // product per group.
        let mut grouped = vec![Complex64::ZERO; 1 << n];
        for (i, a) in self.amps.iter().enumerate() {
            let win = window_value(i, &shifts);
            let mut rest = 0usize;
            for &b in &rest_bits {
                rest = (rest << 1) | ((i >> b) & 1);
            }
            grouped[rest * kdim + win] = *a;
        }

        let mut rho = vec![Complex64::ZERO; kdim * kdim];
        for r in 0..rdim {
            let block = &grouped[r * kdim..(r + 1) * kdim];
            for a in 0..kdim {
                let ba = block[a];
                if ba == Complex64::ZERO {
                    continue;
                }
                for b in 0..kdim {
                    rho[a * kdim + b] += ba * block[b].conj();
                }
            }
        }
        Ok(rho)
    }
}

/// Ordered set of k distinct 1-based qubit indices an observable acts on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QubitWindow {
    qubits: Vec<usize>,
}

impl QubitWindow {
    pub fn new(qubits: Vec<usize>) -> Result<Self> {
        if qubits.is_empty() {
            return Err(Error::Validation("window must contain at least one qubit".into()));
        }
        let mut seen = qubits.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Validation(format!(
                "window qubits must be distinct: {qubits:?}"
            )));
        }
        if seen[0] < 1 {
            return Err(Error::Validation("qubit indices are 1-based".into()));
        }
        Ok(QubitWindow { qubits })
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn width(&self) -> usize {
        self.qubits.len()
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        if self.qubits.len() > n {
            return Err(Error::Validation(format!(
                "window width {} exceeds qubit count {n}",
                self.qubits.len()
            )));
        }
        for &q in &self.qubits {
            if q > n {
                return Err(Error::QubitIndex { index: q, qubits: n });
            }
        }
        Ok(())
    }

    /// Bit positions of the window qubits, in window order.
    pub(crate) fn bit_shifts(&self, n: usize) -> Vec<usize> {
        self.qubits.iter().map(|&q| bit_of(n, q)).collect()
    }
}

/// Window-ordered outcome value of basis index `i`.
#[inline]
pub(crate) fn window_value(i: usize, shifts: &[usize]) -> usize {
    let mut m = 0usize;
    for &sh in shifts {
        m = (m << 1) | ((i >> sh) & 1);
    }
    m
}

/// In-place real 2x2 gate on the given bit position: stride-paired index
/// blocks, contiguous within each half so the loop vectorizes.
#[inline]
pub(crate) fn apply_1q_real(
    amps: &mut [Complex64],
    bit: usize,
    m00: f64,
    m01: f64,
    m10: f64,
    m11: f64,
) {
    let dist = 1usize << bit;
    for block in amps.chunks_exact_mut(2 * dist) {
        let (lo, hi) = block.split_at_mut(dist);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = x * m00 + y * m01;
            *b = x * m10 + y * m11;
        }
    }
}

#[inline]
pub(crate) fn apply_cnot_bits(amps: &mut [Complex64], cbit: usize, tbit: usize) {
    // Enumerate the quarter of indices with control bit 1 and target bit 0 by
    // expanding a packed counter around the two fixed bit positions.
    let (b_lo, b_hi) = if cbit < tbit { (cbit, tbit) } else { (tbit, cbit) };
    let quarter = amps.len() >> 2;
    let lo_mask = (1usize << b_lo) - 1;
    let mid_mask = ((1usize << (b_hi - 1)) - 1) & !lo_mask;
    let cmask = 1usize << cbit;
    let tmask = 1usize << tbit;
    for x in 0..quarter {
        let spread = (x & lo_mask) | ((x & mid_mask) << 1) | ((x & !(lo_mask | mid_mask)) << 2);
        let i = spread | cmask;
        amps.swap(i, i | tmask);
    }
}

/// Real-amplitude mirror of `StateVector` for circuits whose gates are all
/// real (H, Ry, CNOT): half the memory, fewer flops. Training and evaluation
/// hot loops run on this; correctness is pinned to the complex engine by
/// tests.
#[derive(Clone, Debug)]
pub(crate) struct RealState {
    n: usize,
    amps: Vec<f64>,
}

impl RealState {
    pub fn new_zero(n: usize) -> Self {
        debug_assert!(n >= 1 && n <= MAX_QUBITS);
        let mut amps = vec![0.0; 1 << n];
        amps[0] = 1.0;
        RealState { n, amps }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [f64] {
        &mut self.amps
    }

    pub fn amps_vec_mut(&mut self) -> &mut Vec<f64> {
        &mut self.amps
    }

    #[inline]
    pub fn apply_1q(&mut self, q: usize, m00: f64, m01: f64, m10: f64, m11: f64) {
        let bit = bit_of(self.n, q);
        let dist = 1usize << bit;
        for block in self.amps.chunks_exact_mut(2 * dist) {
            let (lo, hi) = block.split_at_mut(dist);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x * m00 + y * m01;
                *b = x * m10 + y * m11;
            }
        }
    }

    #[inline]
    pub fn apply_ry(&mut self, q: usize, angle: f64) {
        let (s, c) = (angle / 2.0).sin_cos();
        self.apply_1q(q, c, -s, s, c);
    }

    #[inline]
    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let cbit = bit_of(self.n, control);
        let tbit = bit_of(self.n, target);
        let (b_lo, b_hi) = if cbit < tbit { (cbit, tbit) } else { (tbit, cbit) };
        let quarter = self.amps.len() >> 2;
        let lo_mask = (1usize << b_lo) - 1;
        let mid_mask = ((1usize << (b_hi - 1)) - 1) & !lo_mask;
        let cmask = 1usize << cbit;
        let tmask = 1usize << tbit;
        for x in 0..quarter {
            let spread = (x & lo_mask) | ((x & mid_mask) << 1) | ((x & !(lo_mask | mid_mask)) << 2);
            let i = spread | cmask;
            self.amps.swap(i, i | tmask);
        }
    }

}
