//! Deterministic synthetic image sets for desk-scale experiments and tests:
//! a 10-class blob set with MNIST-like geometry (28x28, meaningful after 4x4
//! pooling) whose class identity lives in within-row cell correlations, and
//! a 10-class low-rank "faces" set with per-sample lighting variation for
//! the PCA pipeline.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{pooled_angle_features, FeatureSet, RawImages, Split};
use crate::error::Result;

pub const DIGIT_ROWS: usize = 28;
pub const DIGIT_COLS: usize = 28;
pub const FACE_ROWS: usize = 24;
pub const FACE_COLS: usize = 21;

const CLASSES: usize = 10;
const GRID: usize = 4; // pooled cells per side
const CELLS: usize = GRID * GRID;

/// The three ways to split a 4-cell row into two complementary 2-hot masks.
/// A sample lights one side of its class's pairing, so every cell is active
/// exactly half the time regardless of class: single-cell statistics carry
/// nothing, the co-activation pattern carries everything.
const PAIRINGS: [[u8; 2]; 3] = [
    [0b1100, 0b0011],
    [0b1010, 0b0101],
    [0b1001, 0b0110],
];

/// Pairing digits per coded row. Classes 0..8 use their base-3 digits plus a
/// redundant checksum row; class 9 reuses (0, 0) and is told apart from
/// class 0 by the third row.
fn class_digits(label: usize) -> [usize; 3] {
    if label == 9 {
        [0, 0, 1]
    } else {
        [label % 3, label / 3, (label % 3 + label / 3) % 3]
    }
}

/// Active-cell mask for one sample. Rows 0-2 are correlation coded: the
/// class digit picks the pairing, the realized side is a coin flip. Row 3 is
/// distractor noise.
fn sample_mask(label: usize, rng: &mut ChaCha8Rng) -> [bool; CELLS] {
    let mut mask = [false; CELLS];
    for (row, digit) in class_digits(label).into_iter().enumerate() {
        let side = PAIRINGS[digit][rng.random_range(0..2usize)];
        for col in 0..GRID {
            mask[row * GRID + col] = (side >> (GRID - 1 - col)) & 1 == 1;
        }
    }
    for col in 0..GRID {
        mask[3 * GRID + col] = rng.random::<f64>() < 0.5;
    }
    mask
}

fn render_digit(mask: &[bool], rng: &mut ChaCha8Rng, pixels: &mut [u8]) {
    let cell = DIGIT_ROWS / GRID; // 7
    let mut canvas = [0.0f64; DIGIT_ROWS * DIGIT_COLS];
    for (idx, &on) in mask.iter().enumerate() {
        if !on {
            continue;
        }
        let (gr, gc) = (idx / GRID, idx % GRID);
        let cy = (gr * cell) as f64 + cell as f64 / 2.0 + rng.random_range(-1.5..1.5);
        let cx = (gc * cell) as f64 + cell as f64 / 2.0 + rng.random_range(-1.5..1.5);
        let amp = rng.random_range(190.0..245.0);
        let sigma = rng.random_range(1.7..2.3);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for r in 0..DIGIT_ROWS {
            for c in 0..DIGIT_COLS {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                canvas[r * DIGIT_COLS + c] += amp * (-d2 * inv).exp();
            }
        }
    }
    for (px, v) in pixels.iter_mut().zip(&canvas) {
        let noisy = v + rng.random_range(0.0..12.0);
        *px = noisy.clamp(0.0, 255.0) as u8;
    }
}

/// 10-class digit-like set. Labels cycle 0..9 so any prefix is balanced.
pub fn digits_like(count: usize, seed: u64) -> (RawImages, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; count * DIGIT_ROWS * DIGIT_COLS];
    let mut labels = Vec::with_capacity(count);
    for (i, img) in pixels.chunks_exact_mut(DIGIT_ROWS * DIGIT_COLS).enumerate() {
        let label = i % CLASSES;
        let mask = sample_mask(label, &mut rng);
        render_digit(&mask, &mut rng, img);
        labels.push(label as u8);
    }
    (
        RawImages::new(DIGIT_ROWS, DIGIT_COLS, pixels).unwrap(),
        labels,
    )
}

/// Desk-scale digit FeatureSet: renders `train + test` images, pools 7x7 to
/// 16 features, rescales to [0, pi] on training statistics.
pub fn digits_feature_set(train: usize, test: usize, seed: u64) -> Result<FeatureSet> {
    let (images, labels) = digits_like(train + test, seed);
    let splits: Vec<Split> = (0..train + test)
        .map(|i| if i < train { Split::Train } else { Split::Test })
        .collect();
    pooled_angle_features(&images, &labels, &splits, 7, 0.0, std::f64::consts::PI, CLASSES)
}

/// 10-class face-like set: smooth class-specific low-rank structure with
/// per-sample multiplicative lighting ramps and pixel noise.
pub fn faces_like(count: usize, seed: u64) -> (RawImages, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fixed per-class geometry.
    struct Face {
        bumps: Vec<(f64, f64, f64, f64)>, // (cy, cx, sigma, amp)
    }
    let faces: Vec<Face> = (0..CLASSES)
        .map(|_| Face {
            bumps: (0..4)
                .map(|_| {
                    (
                        rng.random_range(3.0..FACE_ROWS as f64 - 3.0),
                        rng.random_range(3.0..FACE_COLS as f64 - 3.0),
                        rng.random_range(2.5..6.0),
                        rng.random_range(90.0..200.0),
                    )
                })
                .collect(),
        })
        .collect();
    let mut pixels = vec![0u8; count * FACE_ROWS * FACE_COLS];
    let mut labels = Vec::with_capacity(count);
    for (i, img) in pixels.chunks_exact_mut(FACE_ROWS * FACE_COLS).enumerate() {
        let label = i % CLASSES;
        let face = &faces[label];
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let strength = rng.random_range(-0.45..0.45);
        let (dirr, dirc) = (phi.sin(), phi.cos());
        for r in 0..FACE_ROWS {
            for c in 0..FACE_COLS {
                let mut v = 40.0;
                for &(cy, cx, sigma, amp) in &face.bumps {
                    let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                    v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
                let ramp = 1.0
                    + strength
                        * ((r as f64 / FACE_ROWS as f64 - 0.5) * dirr
                            + (c as f64 / FACE_COLS as f64 - 0.5) * dirc);
                let noisy = v * ramp + rng.random_range(-8.0..8.0);
                img[r * FACE_COLS + c] = noisy.clamp(0.0, 255.0) as u8;
            }
        }
        labels.push(label as u8);
    }
    (
        RawImages::new(FACE_ROWS, FACE_COLS, pixels).unwrap(),
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_are_deterministic_and_balanced() {
        let (a, la) = digits_like(40, 7);
        let (b, lb) = digits_like(40, 7);
        assert_eq!(a.image(13), b.image(13));
        assert_eq!(la, lb);
        for c in 0..10u8 {
            assert_eq!(la.iter().filter(|&&l| l == c).count(), 4);
        }
        let (c, _) = digits_like(40, 8);
        assert_ne!(a.image(0), c.image(0));
    }

    #[test]
    fn digit_cells_balance_single_cell_statistics() {
        // Coded rows activate every cell with frequency 1/2 for every class,
        // and always light exactly one side of the class pairing.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for label in 0..CLASSES {
            let mut counts = [0usize; CELLS];
            let trials = 2000;
            for _ in 0..trials {
                let mask = sample_mask(label, &mut rng);
                for (c, &on) in counts.iter_mut().zip(&mask) {
                    *c += on as usize;
                }
                for (row, digit) in class_digits(label).into_iter().enumerate() {
                    let side: u8 = (0..GRID).fold(0, |w, col| {
                        (w << 1) | mask[row * GRID + col] as u8
                    });
                    assert!(
                        PAIRINGS[digit].contains(&side),
                        "class {label} row {row} shows {side:04b}"
                    );
                }
            }
            for cell in 0..3 * GRID {
                let freq = counts[cell] as f64 / trials as f64;
                assert!((freq - 0.5).abs() < 0.05, "class {label} cell {cell}: {freq}");
            }
        }
    }

    #[test]
    fn digit_feature_set_shapes() {
        let fs = digits_feature_set(50, 10, 3).unwrap();
        assert_eq!(fs.len(), 60);
        assert_eq!(fs.dim(), 16);
        assert_eq!(fs.split_indices(Split::Train).len(), 50);
        assert_eq!(fs.split_indices(Split::Test).len(), 10);
        for i in 0..fs.len() {
            for v in fs.feature_row(i) {
                assert!(*v >= 0.0 && *v <= std::f64::consts::PI);
            }
        }
    }

    #[test]
    fn faces_have_class_structure() {
        let (imgs, labels) = faces_like(20, 5);
        assert_eq!(imgs.count(), 20);
        assert_eq!(imgs.rows, FACE_ROWS);
        // Same class, different samples: correlated but not identical.
        assert_eq!(labels[0], labels[10]);
        assert_ne!(imgs.image(0), imgs.image(10));
    }
}
