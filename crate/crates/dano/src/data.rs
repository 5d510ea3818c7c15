//! Dataset ingestion and feature pipelines: IDX image parsing, average-pool
//! downsampling, PGM ingestion, PCA (Gram-matrix route for wide data),
//! angle rescaling, and stratified splits.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub mod synth;

/// Row tag: which split a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split tag '{other}'"))),
        }
    }
}

/// N rows of d features with labels and split tags.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    splits: Vec<Split>,
}

impl FeatureSet {
    pub fn from_parts(
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::Validation("feature dim and classes must be positive".into()));
        }
        if labels.is_empty() {
            return Err(Error::Validation("feature set is empty".into()));
        }
        if features.len() != labels.len() * dim || splits.len() != labels.len() {
            return Err(Error::Shape(format!(
                "inconsistent feature set: {} features, {} labels, {} tags, dim {dim}",
                features.len(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("features must be finite".into()));
        }
        Ok(FeatureSet {
            dim,
            classes,
            features,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

/// Incremental FeatureSet assembly.
pub struct FeatureSetBuilder {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    splits: Vec<Split>,
}

impl FeatureSetBuilder {
    pub fn new(dim: usize, classes: usize) -> Self {
        FeatureSetBuilder {
            dim,
            classes,
            features: Vec::new(),
            labels: Vec::new(),
            splits: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: usize, split: Split) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Shape(format!(
                "row has {} features, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        self.splits.push(split);
        Ok(())
    }

    pub fn build(self) -> Result<FeatureSet> {
        FeatureSet::from_parts(self.dim, self.classes, self.features, self.labels, self.splits)
    }
}

/// Stack of same-sized grayscale images.
#[derive(Clone, Debug)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
}

impl RawImages {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || pixels.len() % (rows * cols) != 0 {
            return Err(Error::Shape(format!(
                "{} pixels do not tile {rows}x{cols} images",
                pixels.len()
            )));
        }
        Ok(RawImages { rows, cols, pixels })
    }

    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.rows * self.cols;
        &self.pixels[i * len..(i + 1) * len]
    }
}

// ---------------------------------------------------------------------------
// IDX (big-endian image/label containers)
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn u32_be(&mut self, what: &str) -> Result<u32> {
        if self.offset + 4 > self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.offset as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..self.offset + 4].try_into().unwrap());
        self.offset += 4;
        Ok(v)
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + len > self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.bytes.len() as u64,
                format!(
                    "truncated {what}: need {} bytes past offset {}, file has {}",
                    len,
                    self.offset,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(s)
    }
}

/// Parses a pair of IDX files (images + labels) and cross-checks the counts.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(RawImages, Vec<u8>)> {
    let img_bytes =
        std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let mut r = ByteReader {
        bytes: &img_bytes,
        offset: 0,
        path: images_path,
    };
    let magic = r.u32_be("magic number")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            images_path,
            0,
            format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = r.u32_be("image count")? as usize;
    let rows = r.u32_be("row count")? as usize;
    let cols = r.u32_be("column count")? as usize;
    let pixels = r.take(count * rows * cols, "pixel data")?.to_vec();
    let images = RawImages::new(rows, cols, pixels)?;

    let lbl_bytes =
        std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let mut r = ByteReader {
        bytes: &lbl_bytes,
        offset: 0,
        path: labels_path,
    };
    let magic = r.u32_be("magic number")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            labels_path,
            0,
            format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let lcount = r.u32_be("label count")? as usize;
    if lcount != count {
        return Err(Error::format(
            labels_path,
            4,
            format!("label count {lcount} does not match image count {count}"),
        ));
    }
    let labels = r.take(lcount, "label data")?.to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Validation(format!(
            "label byte {} at sample {pos} exceeds 9",
            labels[pos]
        )));
    }
    Ok((images, labels))
}

/// Serializes images and labels in IDX format (used by tests and tooling).
pub fn write_idx(
    dir: &Path,
    prefix: &str,
    images: &RawImages,
    labels: &[u8],
) -> Result<(PathBuf, PathBuf)> {
    if images.count() != labels.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.count(),
            labels.len()
        )));
    }
    let images_path = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let labels_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    let mut buf = Vec::new();
    buf.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(images.count() as u32).to_be_bytes());
    buf.extend_from_slice(&(images.rows as u32).to_be_bytes());
    buf.extend_from_slice(&(images.cols as u32).to_be_bytes());
    buf.extend_from_slice(&images.pixels);
    std::fs::write(&images_path, &buf).map_err(|e| Error::io(&images_path, e))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    buf.extend_from_slice(labels);
    std::fs::write(&labels_path, &buf).map_err(|e| Error::io(&labels_path, e))?;
    Ok((images_path, labels_path))
}

// ---------------------------------------------------------------------------
// Pooling and rescaling
// ---------------------------------------------------------------------------

/// Block-mean downsampling by an integer factor; output scaled to [0, 1].
pub fn avg_pool(image: &[u8], rows: usize, cols: usize, factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(Error::Validation(format!(
            "{rows}x{cols} image is not divisible by pooling factor {factor}"
        )));
    }
    if image.len() != rows * cols {
        return Err(Error::Shape(format!(
            "image has {} pixels, expected {rows}x{cols}",
            image.len()
        )));
    }
    let (orows, ocols) = (rows / factor, cols / factor);
    let denom = (factor * factor * 255) as f64;
    let mut out = vec![0.0; orows * ocols];
    for (r, row) in image.chunks_exact(cols).enumerate() {
        let or = r / factor;
        for (c, &px) in row.iter().enumerate() {
            out[or * ocols + c / factor] += px as f64;
        }
    }
    for v in &mut out {
        *v /= denom;
    }
    Ok(out)
}

/// Per-feature affine map of the training-split range onto [lo, hi]; val and
/// test rows reuse the training statistics and are clamped. Constant features
/// map to 0 and are reported back.
pub fn rescale_to_angles(
    features: &mut [f64],
    dim: usize,
    splits: &[Split],
    lo: f64,
    hi: f64,
) -> Result<Vec<usize>> {
    let rows = splits.len();
    if features.len() != rows * dim {
        return Err(Error::Shape(format!(
            "{} features do not tile {rows} rows of width {dim}",
            features.len()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("features must be finite".into()));
    }
    let mut constant = Vec::new();
    for j in 0..dim {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..rows {
            if splits[i] == Split::Train {
                min = min.min(features[i * dim + j]);
                max = max.max(features[i * dim + j]);
            }
        }
        if !min.is_finite() {
            return Err(Error::Validation("training split is empty".into()));
        }
        if min == max {
            constant.push(j);
            for i in 0..rows {
                features[i * dim + j] = 0.0;
            }
            continue;
        }
        let scale = (hi - lo) / (max - min);
        for i in 0..rows {
            // Clamping also covers training rows, where it only trims the
            // rounding dust of mapping min/max onto the endpoints.
            let v = lo + (features[i * dim + j] - min) * scale;
            features[i * dim + j] = v.clamp(lo, hi);
        }
    }
    Ok(constant)
}

/// Full image-to-angles pipeline used for pooled datasets: block-mean pool
/// every image, then rescale each pooled feature to [lo, hi] on training
/// statistics.
pub fn pooled_angle_features(
    images: &RawImages,
    labels: &[u8],
    splits: &[Split],
    factor: usize,
    lo: f64,
    hi: f64,
    classes: usize,
) -> Result<FeatureSet> {
    if images.count() != labels.len() || labels.len() != splits.len() {
        return Err(Error::Shape(format!(
            "{} images, {} labels, {} split tags",
            images.count(),
            labels.len(),
            splits.len()
        )));
    }
    let dim = (images.rows / factor) * (images.cols / factor);
    let pooled: Vec<Vec<f64>> = (0..images.count())
        .into_par_iter()
        .map(|i| avg_pool(images.image(i), images.rows, images.cols, factor))
        .collect::<Result<Vec<_>>>()?;
    let mut features = Vec::with_capacity(images.count() * dim);
    for row in pooled {
        features.extend(row);
    }
    rescale_to_angles(&mut features, dim, splits, lo, hi)?;
    FeatureSet::from_parts(
        dim,
        classes,
        features,
        labels.iter().map(|&l| l as usize).collect(),
        splits.to_vec(),
    )
}

// ---------------------------------------------------------------------------
// PCA (standardize, then Gram-matrix eigendecomposition)
// ---------------------------------------------------------------------------

/// Fitted PCA pipeline: per-feature standardization followed by projection
/// onto orthonormal principal directions.
#[derive(Clone, Debug)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// d x D, row-major; rows are orthonormal.
    pub components: Vec<f64>,
    pub out_dim: usize,
    pub in_dim: usize,
    pub explained_variance_ratio: Vec<f64>,
}

const SIGMA_FLOOR: f64 = 1e-8;

/// Fits PCA on an N x D training matrix via the N x N Gram matrix, which
/// stays cheap when D is much larger than N (wide image data).
pub fn pca_fit(x: &[f64], rows: usize, dim: usize, out_dim: usize) -> Result<PcaModel> {
    if rows * dim != x.len() {
        return Err(Error::Shape(format!(
            "{} values do not tile {rows}x{dim}",
            x.len()
        )));
    }
    if rows < out_dim {
        return Err(Error::Validation(format!(
            "need at least {out_dim} samples to fit {out_dim} components, got {rows}"
        )));
    }
    let mut mean = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut var = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| (s / rows as f64).sqrt().max(SIGMA_FLOOR))
        .collect();

    let mut xs = vec![0.0; rows * dim];
    xs.par_chunks_mut(dim)
        .zip(x.par_chunks(dim))
        .for_each(|(out, row)| {
            for ((o, v), (m, s)) in out.iter_mut().zip(row).zip(mean.iter().zip(&scale)) {
                *o = (v - m) / s;
            }
        });

    // Gram matrix G = Xs Xs^T; each entry is an independent dot product, so
    // row parallelism cannot change results.
    let mut gram = vec![0.0; rows * rows];
    gram.par_chunks_mut(rows).enumerate().for_each(|(i, grow)| {
        let ri = &xs[i * dim..(i + 1) * dim];
        for (j, g) in grow.iter_mut().enumerate() {
            let rj = &xs[j * dim..(j + 1) * dim];
            *g = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
        }
    });

    let gmat = nalgebra::DMatrix::from_fn(rows, rows, |i, j| gram[i * rows + j]);
    let eig = nalgebra::SymmetricEigen::new(gmat);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let total: f64 = eig.eigenvalues.iter().map(|&e| e.max(0.0)).sum();
    let mut components = vec![0.0; out_dim * dim];
    let mut evr = Vec::with_capacity(out_dim);
    for (c, &idx) in order.iter().take(out_dim).enumerate() {
        let mu = eig.eigenvalues[idx];
        if mu <= 1e-10 * total.max(1.0) {
            return Err(Error::Validation(format!(
                "training data has rank below the requested {out_dim} components"
            )));
        }
        // v = Xs^T u / sqrt(mu) is a unit eigenvector of the covariance.
        let inv = 1.0 / mu.sqrt();
        let dst = &mut components[c * dim..(c + 1) * dim];
        for (i, row) in xs.chunks_exact(dim).enumerate() {
            let u = eig.eigenvectors[(i, idx)] * inv;
            for (d, v) in dst.iter_mut().zip(row) {
                *d += u * v;
            }
        }
        evr.push(mu / total);
    }
    Ok(PcaModel {
        mean,
        scale,
        components,
        out_dim,
        in_dim: dim,
        explained_variance_ratio: evr,
    })
}

/// Projects rows into the component space: z = C (x - mean) / scale.
pub fn pca_transform(m: &PcaModel, x: &[f64], rows: usize) -> Result<Vec<f64>> {
    if x.len() != rows * m.in_dim {
        return Err(Error::Shape(format!(
            "{} values do not tile {rows}x{}",
            x.len(),
            m.in_dim
        )));
    }
    let mut out = vec![0.0; rows * m.out_dim];
    out.par_chunks_mut(m.out_dim)
        .zip(x.par_chunks(m.in_dim))
        .for_each(|(z, row)| {
            for (c, zc) in z.iter_mut().enumerate() {
                let comp = &m.components[c * m.in_dim..(c + 1) * m.in_dim];
                *zc = comp
                    .iter()
                    .zip(row)
                    .zip(m.mean.iter().zip(&m.scale))
                    .map(|((w, v), (mu, s))| w * (v - mu) / s)
                    .sum();
            }
        });
    Ok(out)
}

/// Maps component-space rows back to the input space:
/// x = mean + scale .* (C^T z).
pub fn pca_inverse(m: &PcaModel, z: &[f64], rows: usize) -> Result<Vec<f64>> {
    if z.len() != rows * m.out_dim {
        return Err(Error::Shape(format!(
            "{} values do not tile {rows}x{}",
            z.len(),
            m.out_dim
        )));
    }
    let mut out = vec![0.0; rows * m.in_dim];
    out.par_chunks_mut(m.in_dim)
        .zip(z.par_chunks(m.out_dim))
        .for_each(|(x, zrow)| {
            x.copy_from_slice(&m.mean);
            for (c, &zc) in zrow.iter().enumerate() {
                let comp = &m.components[c * m.in_dim..(c + 1) * m.in_dim];
                for ((xv, w), s) in x.iter_mut().zip(comp).zip(&m.scale) {
                    *xv += s * w * zc;
                }
            }
        });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

/// Deterministic per-class proportional split. Global split sizes follow the
/// largest-remainder apportionment of N * fraction; every class lands within
/// one sample of its ideal share in every split.
pub fn stratified_split(labels: &[usize], fractions: &[f64], seed: u64) -> Result<Vec<Split>> {
    if fractions.len() != 3 {
        return Err(Error::Validation(format!(
            "expected 3 fractions (train/val/test), got {}",
            fractions.len()
        )));
    }
    if fractions.iter().any(|f| *f < 0.0) {
        return Err(Error::Validation("fractions must be non-negative".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "fractions must sum to 1, got {total}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::Validation("no labels to split".into()));
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    let mut class_members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        class_members[l].push(i);
    }
    for (c, members) in class_members.iter().enumerate() {
        if !members.is_empty() && members.len() < fractions.len() {
            return Err(Error::Validation(format!(
                "class {c} has only {} samples for {} splits",
                members.len(),
                fractions.len()
            )));
        }
    }

    let n = labels.len();
    let targets = largest_remainder(n, fractions);

    // Per-class quotas by largest remainder, then a repair pass to hit the
    // global targets exactly while staying within +-1 per class.
    let mut quotas: Vec<[usize; 3]> = Vec::with_capacity(num_classes);
    for members in &class_members {
        quotas.push(largest_remainder(members.len(), fractions));
    }
    for s in 0..3 {
        let mut have: isize = quotas.iter().map(|q| q[s] as isize).sum();
        let want = targets[s] as isize;
        let mut guard = 0;
        while have != want {
            guard += 1;
            if guard > 4 * n {
                return Err(Error::Numerical(
                    "stratified split repair did not converge".into(),
                ));
            }
            // Move one seat between this split and another, choosing the
            // class/split pair that stays closest to the ideal shares.
            let give = have > want;
            let mut best: Option<(usize, usize, f64)> = None;
            for (c, members) in class_members.iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let nc = members.len() as f64;
                for t in 0..3 {
                    if t == s {
                        continue;
                    }
                    let (from, to) = if give { (s, t) } else { (t, s) };
                    if quotas[c][from] == 0 {
                        continue;
                    }
                    let from_after = quotas[c][from] as f64 - 1.0 - nc * fractions[from];
                    let to_after = quotas[c][to] as f64 + 1.0 - nc * fractions[to];
                    if from_after.abs() > 1.0 + 1e-9 || to_after.abs() > 1.0 + 1e-9 {
                        continue;
                    }
                    // Only move toward a split that is itself off target.
                    let t_have: isize = quotas.iter().map(|q| q[t] as isize).sum();
                    let t_want = targets[t] as isize;
                    if give && t_have >= t_want {
                        continue;
                    }
                    if !give && t_have <= t_want {
                        continue;
                    }
                    let score = from_after.abs() + to_after.abs();
                    if best.map(|(_, _, b)| score < b - 1e-12).unwrap_or(true) {
                        best = Some((c, t, score));
                    }
                }
            }
            let (c, t, _) = best.ok_or_else(|| {
                Error::Numerical("stratified split has no feasible repair move".into())
            })?;
            let (from, to) = if give { (s, t) } else { (t, s) };
            quotas[c][from] -= 1;
            quotas[c][to] += 1;
            have = quotas.iter().map(|q| q[s] as isize).sum();
        }
    }

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut tags = vec![Split::Train; n];
    for (members, quota) in class_members.iter().zip(&quotas) {
        let mut order = members.clone();
        order.shuffle(&mut rng);
        let (q_train, q_val) = (quota[0], quota[1]);
        for (pos, &i) in order.iter().enumerate() {
            tags[i] = if pos < q_train {
                Split::Train
            } else if pos < q_train + q_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(tags)
}

fn largest_remainder(n: usize, fractions: &[f64]) -> [usize; 3] {
    let ideal: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut out = [0usize; 3];
    let mut used = 0;
    for (o, v) in out.iter_mut().zip(&ideal) {
        *o = v.floor() as usize;
        used += *o;
    }
    let mut rema: Vec<(usize, f64)> = ideal
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v - v.floor()))
        .collect();
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in rema.into_iter().take(n - used) {
        out[i] += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// PGM (binary P5)
// ---------------------------------------------------------------------------

/// One grayscale image.
#[derive(Clone, Debug)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Parses a binary (P5) PGM file with 8-bit depth; header comments are
/// skipped.
pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(path, 0, "not a binary PGM (missing P5 magic)"));
    }
    let mut offset = 2usize;
    let mut fields = [0usize; 3]; // width, height, maxval
    for field in fields.iter_mut() {
        // Skip whitespace and comment lines.
        loop {
            while offset < bytes.len() && bytes[offset].is_ascii_whitespace() {
                offset += 1;
            }
            if offset < bytes.len() && bytes[offset] == b'#' {
                while offset < bytes.len() && bytes[offset] != b'\n' {
                    offset += 1;
                }
            } else {
                break;
            }
        }
        let start = offset;
        while offset < bytes.len() && bytes[offset].is_ascii_digit() {
            offset += 1;
        }
        if start == offset {
            return Err(Error::format(path, start as u64, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..offset])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(path, start as u64, "header field out of range"))?;
    }
    let (cols, rows, maxval) = (fields[0], fields[1], fields[2]);
    if maxval > 255 {
        return Err(Error::Validation(format!(
            "{}: 16-bit PGM (maxval {maxval}) is not supported",
            path.display()
        )));
    }
    if offset >= bytes.len() || !bytes[offset].is_ascii_whitespace() {
        return Err(Error::format(path, offset as u64, "missing whitespace after maxval"));
    }
    offset += 1;
    let need = rows * cols;
    if bytes.len() < offset + need {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!(
                "pixel data truncated: need {need} bytes at offset {offset}, file has {}",
                bytes.len()
            ),
        ));
    }
    Ok(GrayImage {
        rows,
        cols,
        pixels: bytes[offset..offset + need].to_vec(),
    })
}

/// Writes a binary P5 PGM.
pub fn write_pgm(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} pixels do not fill {rows}x{cols}",
            pixels.len()
        )));
    }
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

/// Capture geometry parsed from an extended-Yale-style filename such as
/// `yaleB11_P00A+010E-20.pgm`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct YaleCapture {
    pub subject: u32,
    pub azimuth: i32,
    pub elevation: i32,
    pub ambient: bool,
}

pub fn parse_yale_filename(name: &str) -> Option<YaleCapture> {
    let stem = name.strip_suffix(".pgm")?;
    let rest = stem.strip_prefix("yaleB")?;
    let (subject_str, tail) = rest.split_once('_')?;
    let subject: u32 = subject_str.parse().ok()?;
    if tail.ends_with("Ambient") {
        return Some(YaleCapture {
            subject,
            azimuth: 0,
            elevation: 0,
            ambient: true,
        });
    }
    let a_pos = tail.find('A')?;
    let e_pos = tail.find('E')?;
    let azimuth: i32 = tail[a_pos + 1..e_pos].parse().ok()?;
    let elevation: i32 = tail[e_pos + 1..].parse().ok()?;
    Some(YaleCapture {
        subject,
        azimuth,
        elevation,
        ambient: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn idx_round_trip_and_header_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let images = RawImages::new(28, 28, vec![7u8; 2 * 28 * 28]).unwrap();
        let labels = vec![3u8, 9u8];
        let (ip, lp) = write_idx(dir.path(), "t", &images, &labels).unwrap();
        let (ri, rl) = load_idx(&ip, &lp).unwrap();
        assert_eq!(ri.count(), 2);
        assert_eq!(ri.rows, 28);
        assert_eq!(rl, labels);
    }

    #[test]
    fn idx_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");

        // Bad magic.
        std::fs::write(&ip, [0, 0, 8, 99, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        std::fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 0]).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));

        // Mismatched counts.
        let images = RawImages::new(2, 2, vec![0u8; 4]).unwrap();
        let (ip, lp) = write_idx(dir.path(), "m", &images, &[1]).unwrap();
        let mut lbl = std::fs::read(&lp).unwrap();
        lbl[7] = 2; // claim 2 labels
        lbl.push(1);
        std::fs::write(&lp, &lbl).unwrap();
        assert!(load_idx(&ip, &lp).is_err());

        // Label above 9.
        let (ip, lp) = write_idx(dir.path(), "b", &images, &[12]).unwrap();
        assert!(matches!(load_idx(&ip, &lp).unwrap_err(), Error::Validation(_)));

        // Truncated pixel data carries the offset.
        let mut img = std::fs::read(&ip).unwrap();
        img.truncate(img.len() - 2);
        std::fs::write(&ip, &img).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("byte"));
    }

    #[test]
    fn avg_pool_cases() {
        let zeros = vec![0u8; 28 * 28];
        assert!(avg_pool(&zeros, 28, 28, 7).unwrap().iter().all(|&v| v == 0.0));

        let full = vec![255u8; 28 * 28];
        assert!(avg_pool(&full, 28, 28, 7)
            .unwrap()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));

        let mut one = vec![0u8; 28 * 28];
        one[0] = 255;
        let pooled = avg_pool(&one, 28, 28, 7).unwrap();
        assert!((pooled[0] - 1.0 / 49.0).abs() < 1e-12);
        assert!(pooled[1..].iter().all(|&v| v == 0.0));

        assert!(avg_pool(&zeros, 28, 28, 5).is_err());
    }

    #[test]
    fn rescale_maps_train_range_and_clamps() {
        use std::f64::consts::PI;
        let mut features = vec![0.0, 1.0, 0.5, 2.0];
        let splits = [Split::Train, Split::Train, Split::Train, Split::Test];
        let constant = rescale_to_angles(&mut features, 1, &splits, -PI, PI).unwrap();
        assert!(constant.is_empty());
        assert!((features[0] + PI).abs() < 1e-12);
        assert!((features[1] - PI).abs() < 1e-12);
        assert!(features[2].abs() < 1e-12);
        assert!((features[3] - PI).abs() < 1e-12); // clamped

        // Constant feature maps to zero with a warning record.
        let mut features = vec![4.0, 4.0, 4.0];
        let splits = [Split::Train, Split::Train, Split::Test];
        let constant = rescale_to_angles(&mut features, 1, &splits, -PI, PI).unwrap();
        assert_eq!(constant, vec![0]);
        assert!(features.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pca_rank_one_line() {
        // Points on a 2-D line: one component reconstructs exactly.
        let x: Vec<f64> = (0..10)
            .flat_map(|i| {
                let t = i as f64;
                [1.0 + 2.0 * t, -3.0 + 0.5 * t]
            })
            .collect();
        let m = pca_fit(&x, 10, 2, 1).unwrap();
        let z = pca_transform(&m, &x, 10).unwrap();
        let back = pca_inverse(&m, &z, 10).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pca_components_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (rows, dim, d) = (40, 12, 5);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = pca_fit(&x, rows, dim, d).unwrap();
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = m.components[a * dim..(a + 1) * dim]
                    .iter()
                    .zip(&m.components[b * dim..(b + 1) * dim])
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gram_route_matches_covariance_oracle() {
        // Projection variances must equal the top eigenvalues of the D x D
        // covariance, computed by the independent Jacobi solver.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, dim, d) = (50, 20, 5);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = pca_fit(&x, rows, dim, d).unwrap();
        let z = pca_transform(&m, &x, rows).unwrap();

        // Standardize exactly as the fit does, then form the covariance.
        let mut xs = vec![0.0; rows * dim];
        for (i, row) in x.chunks_exact(dim).enumerate() {
            for (j, v) in row.iter().enumerate() {
                xs[i * dim + j] = (v - m.mean[j]) / m.scale[j];
            }
        }
        let mut cov = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                let mut s = 0.0;
                for i in 0..rows {
                    s += xs[i * dim + a] * xs[i * dim + b];
                }
                cov[a * dim + b] = s / (rows as f64 - 1.0);
            }
        }
        let mut eig = crate::oracle::symmetric_eigenvalues(&cov, dim).unwrap();
        eig.reverse();

        for c in 0..d {
            let var: f64 = (0..rows).map(|i| z[i * d + c] * z[i * d + c]).sum::<f64>()
                / (rows as f64 - 1.0);
            assert!((var - eig[c]).abs() < 1e-8, "component {c}: {var} vs {}", eig[c]);
        }
    }

    #[test]
    fn pca_inverse_of_zero_is_mean_and_projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (rows, dim, d) = (30, 8, 3);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = pca_fit(&x, rows, dim, d).unwrap();

        let back = pca_inverse(&m, &vec![0.0; d], 1).unwrap();
        for (a, b) in back.iter().zip(&m.mean) {
            assert!((a - b).abs() < 1e-12);
        }

        // transform . inverse is the identity on component space.
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x1 = pca_inverse(&m, &z, 1).unwrap();
        let z1 = pca_transform(&m, &x1, 1).unwrap();
        for (a, b) in z1.iter().zip(&z) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pca_reconstruction_error_non_increasing_in_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rows, dim) = (30, 10);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for d in 1..=6 {
            let m = pca_fit(&x, rows, dim, d).unwrap();
            let z = pca_transform(&m, &x, rows).unwrap();
            let back = pca_inverse(&m, &z, rows).unwrap();
            let err: f64 = back.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(err <= last + 1e-9);
            last = err;
        }
    }

    #[test]
    fn stratified_split_exact_paper_counts() {
        let labels: Vec<usize> = (0..1980).map(|i| i % 10).collect();
        let tags = stratified_split(&labels, &[0.8, 0.1, 0.1], 42).unwrap();
        let count = |s: Split| tags.iter().filter(|&&t| t == s).count();
        assert_eq!(count(Split::Train), 1584);
        assert_eq!(count(Split::Val), 198);
        assert_eq!(count(Split::Test), 198);

        // Per-class proportionality within one sample.
        for c in 0..10usize {
            for (s, ideal) in [(Split::Train, 158.4), (Split::Val, 19.8), (Split::Test, 19.8)] {
                let got = labels
                    .iter()
                    .zip(&tags)
                    .filter(|(&l, &t)| l == c && t == s)
                    .count() as f64;
                assert!((got - ideal).abs() <= 1.0, "class {c} split {s:?}: {got}");
            }
        }

        // Determinism.
        let again = stratified_split(&labels, &[0.8, 0.1, 0.1], 42).unwrap();
        assert_eq!(tags, again);
        let different = stratified_split(&labels, &[0.8, 0.1, 0.1], 43).unwrap();
        assert_ne!(tags, different);
    }

    #[test]
    fn stratified_split_guards() {
        assert!(stratified_split(&[0, 0, 1], &[0.5, 0.25, 0.3], 0).is_err());
        // A class with fewer samples than splits is rejected.
        let labels = [0usize, 0, 0, 0, 1, 1];
        assert!(stratified_split(&labels, &[0.34, 0.33, 0.33], 0).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn stratified_split_invariants(seed in 0u64..1000, sizes in proptest::collection::vec(3usize..40, 2..6)) {
            let mut labels = Vec::new();
            for (c, sz) in sizes.iter().enumerate() {
                labels.extend(std::iter::repeat(c).take(*sz));
            }
            let fractions = [0.6, 0.2, 0.2];
            let tags = stratified_split(&labels, &fractions, seed).unwrap();
            proptest::prop_assert_eq!(tags.len(), labels.len());
            // Global counts follow largest remainder.
            let targets = super::largest_remainder(labels.len(), &fractions);
            for (s, t) in [Split::Train, Split::Val, Split::Test].iter().zip(targets) {
                let got = tags.iter().filter(|&&x| x == *s).count();
                proptest::prop_assert_eq!(got, t);
            }
            // Per-class deviation at most 1.
            for (c, sz) in sizes.iter().enumerate() {
                for (s, f) in [Split::Train, Split::Val, Split::Test].iter().zip(fractions) {
                    let got = labels.iter().zip(&tags).filter(|(&l, &t)| l == c && t == *s).count() as f64;
                    proptest::prop_assert!((got - *sz as f64 * f).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn pgm_round_trip_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, 2, 2, &[1, 2, 3, 4]).unwrap();
        let img = load_pgm(&p).unwrap();
        assert_eq!((img.rows, img.cols), (2, 2));
        assert_eq!(img.pixels, vec![1, 2, 3, 4]);

        // Comment lines in the header are skipped.
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# a comment\n2 2\n# another\n255\n\x01\x02\x03\x04").unwrap();
        let img = load_pgm(&p).unwrap();
        assert_eq!(img.pixels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn pgm_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgm");
        std::fs::write(&p, b"P2\n2 2\n255\n").unwrap();
        assert!(matches!(load_pgm(&p).unwrap_err(), Error::Format { .. }));

        std::fs::write(&p, b"P5\n2 2\n65535\n").unwrap();
        assert!(matches!(load_pgm(&p).unwrap_err(), Error::Validation(_)));

        std::fs::write(&p, b"P5\n2 2\n255\n\x01\x02").unwrap();
        assert!(matches!(load_pgm(&p).unwrap_err(), Error::Format { .. }));
    }

    #[test]
    fn yale_filename_parsing() {
        let c = parse_yale_filename("yaleB11_P00A+010E-20.pgm").unwrap();
        assert_eq!(c, YaleCapture { subject: 11, azimuth: 10, elevation: -20, ambient: false });
        let c = parse_yale_filename("yaleB03_P00A-035E+65.pgm").unwrap();
        assert_eq!(c.azimuth, -35);
        assert_eq!(c.elevation, 65);
        let c = parse_yale_filename("yaleB05_P00_Ambient.pgm").unwrap();
        assert!(c.ambient);
        assert!(parse_yale_filename("something.png").is_none());
    }
}
