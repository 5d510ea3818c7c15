//! On-disk formats: versioned text checkpoints (17-significant-digit floats,
//! exact f64 round-trip), feature-set caches, flat key=value config
//! snapshots, content digests, and the metrics CSV schema.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{FeatureSet, Split};
use crate::error::{Error, Result};
use crate::model::{Mode, ModelConfig};
use crate::train::{Metrics, ParamLayout, TrainState};

const CHECKPOINT_HEADER: &str = "dano checkpoint v1";
const FEATURES_HEADER: &str = "dano features v1";

/// Metrics CSV column order; stable within a major version.
pub const METRICS_COLUMNS: &str = "epoch,train_loss,train_acc,val_acc,test_acc,wall_seconds";

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_float(s: &str, path: &Path, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| {
        Error::Validation(format!("{}: bad float for {what}: '{s}'", path.display()))
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub fn write_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    let mut out = String::new();
    let cfg = &state.cfg;
    writeln!(out, "{CHECKPOINT_HEADER}").unwrap();
    writeln!(out, "mode = {}", cfg.mode.as_str()).unwrap();
    writeln!(out, "qubits = {}", cfg.n).unwrap();
    writeln!(out, "locality = {}", cfg.k).unwrap();
    writeln!(out, "layers = {}", cfg.layers).unwrap();
    writeln!(out, "windows = {}", cfg.windows).unwrap();
    writeln!(out, "classes = {}", cfg.classes).unwrap();
    writeln!(out, "epoch = {}", state.epoch).unwrap();
    writeln!(out, "step = {}", state.step).unwrap();
    writeln!(out, "seed = {}", state.seed).unwrap();
    let frozen: String = state
        .frozen
        .iter()
        .map(|&f| if f { '1' } else { '0' })
        .collect();
    writeln!(out, "frozen = {frozen}").unwrap();
    for (name, values) in [("params", &state.params), ("m1", &state.m1), ("m2", &state.m2)] {
        writeln!(out, "{name} = {}", values.len()).unwrap();
        for v in values.iter() {
            writeln!(out, "{}", fmt_float(*v)).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<TrainState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != CHECKPOINT_HEADER {
        return Err(Error::format(
            path,
            0,
            format!("unknown checkpoint header '{header}'"),
        ));
    }
    let mut kv = std::collections::HashMap::new();
    let mut arrays: Vec<(String, Vec<f64>)> = Vec::new();
    while let Some(line) = lines.next() {
        let Some((key, value)) = line.split_once(" = ") else {
            return Err(Error::Validation(format!(
                "{}: malformed checkpoint line '{line}'",
                path.display()
            )));
        };
        match key {
            "params" | "m1" | "m2" => {
                let len: usize = value.parse().map_err(|_| {
                    Error::Validation(format!("{}: bad length '{value}'", path.display()))
                })?;
                let mut values = Vec::with_capacity(len);
                for _ in 0..len {
                    let v = lines.next().ok_or_else(|| {
                        Error::Validation(format!(
                            "{}: truncated {key} array",
                            path.display()
                        ))
                    })?;
                    values.push(parse_float(v, path, key)?);
                }
                arrays.push((key.to_string(), values));
            }
            _ => {
                kv.insert(key.to_string(), value.to_string());
            }
        }
    }
    let get = |k: &str| -> Result<&String> {
        kv.get(k)
            .ok_or_else(|| Error::Validation(format!("{}: missing field '{k}'", path.display())))
    };
    let mode: Mode = get("mode")?.parse()?;
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Validation(format!("{}: bad integer for {k}", path.display())))
    };
    let cfg = ModelConfig::new(
        parse_usize("qubits")?,
        parse_usize("locality")?,
        parse_usize("layers")?,
        mode,
        parse_usize("windows")?,
        parse_usize("classes")?,
    )?;
    let layout = ParamLayout::for_config(&cfg);
    let frozen_str = get("frozen")?;
    let frozen: Vec<bool> = frozen_str.chars().map(|c| c == '1').collect();
    let mut params = None;
    let mut m1 = None;
    let mut m2 = None;
    for (name, values) in arrays {
        match name.as_str() {
            "params" => params = Some(values),
            "m1" => m1 = Some(values),
            "m2" => m2 = Some(values),
            _ => unreachable!(),
        }
    }
    let params = params
        .ok_or_else(|| Error::Validation(format!("{}: missing params array", path.display())))?;
    let m1 = m1.ok_or_else(|| Error::Validation(format!("{}: missing m1 array", path.display())))?;
    let m2 = m2.ok_or_else(|| Error::Validation(format!("{}: missing m2 array", path.display())))?;
    if params.len() != layout.total() || m1.len() != params.len() || m2.len() != params.len() {
        return Err(Error::Shape(format!(
            "{}: checkpoint arrays do not match the {}-parameter layout",
            path.display(),
            layout.total()
        )));
    }
    if frozen.len() != params.len() {
        return Err(Error::Shape(format!(
            "{}: frozen mask has {} bits for {} parameters",
            path.display(),
            frozen.len(),
            params.len()
        )));
    }
    Ok(TrainState {
        cfg,
        params,
        m1,
        m2,
        step: get("step")?
            .parse()
            .map_err(|_| Error::Validation(format!("{}: bad step", path.display())))?,
        epoch: parse_usize("epoch")?,
        seed: get("seed")?
            .parse()
            .map_err(|_| Error::Validation(format!("{}: bad seed", path.display())))?,
        frozen,
    })
}

// ---------------------------------------------------------------------------
// Feature-set cache
// ---------------------------------------------------------------------------

pub fn write_feature_cache(path: &Path, fs: &FeatureSet) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{FEATURES_HEADER}").unwrap();
    writeln!(out, "rows = {}", fs.len()).unwrap();
    writeln!(out, "dim = {}", fs.dim()).unwrap();
    writeln!(out, "classes = {}", fs.classes()).unwrap();
    for i in 0..fs.len() {
        write!(out, "{} {}", fs.split(i).as_str(), fs.label(i)).unwrap();
        for v in fs.feature_row(i) {
            write!(out, " {}", fmt_float(*v)).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != FEATURES_HEADER {
        return Err(Error::format(
            path,
            0,
            format!("unknown feature cache header '{header}'"),
        ));
    }
    let mut meta = std::collections::HashMap::new();
    for _ in 0..3 {
        let line = lines.next().unwrap_or("");
        let Some((k, v)) = line.split_once(" = ") else {
            return Err(Error::Validation(format!(
                "{}: malformed cache header line '{line}'",
                path.display()
            )));
        };
        meta.insert(k.to_string(), v.to_string());
    }
    let parse = |k: &str| -> Result<usize> {
        meta.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Validation(format!("{}: missing/bad field {k}", path.display())))
    };
    let rows = parse("rows")?;
    let dim = parse("dim")?;
    let classes = parse("classes")?;
    let mut features = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows);
    let mut splits = Vec::with_capacity(rows);
    for _ in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Validation(format!("{}: truncated cache", path.display())))?;
        let mut parts = line.split(' ');
        let split: Split = parts
            .next()
            .ok_or_else(|| Error::Validation(format!("{}: empty row", path.display())))?
            .parse()?;
        let label: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Validation(format!("{}: bad label", path.display())))?;
        for p in parts {
            features.push(parse_float(p, path, "feature")?);
        }
        labels.push(label);
        splits.push(split);
    }
    FeatureSet::from_parts(dim, classes, features, labels, splits)
}

// ---------------------------------------------------------------------------
// Flat key=value documents (config snapshots, pipeline metadata)
// ---------------------------------------------------------------------------

pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        writeln!(out, "{k} = {v}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Validation(format!(
                "{}: expected key = value, got '{line}'",
                path.display()
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Digests and CSV
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit content digest (reproducibility bookkeeping, not security).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_hex(&bytes))
}

/// One metrics CSV row in the documented column order. `wall_seconds` is
/// informational and excluded from reproducibility guarantees.
pub fn metrics_csv_row(m: &Metrics) -> String {
    format!(
        "{},{},{},{},{},{}",
        m.epoch,
        m.train_loss,
        m.train_accuracy,
        m.val_accuracy.map(|v| v.to_string()).unwrap_or_default(),
        m.test_accuracy,
        m.wall_seconds
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSetBuilder;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::new(3, 2, 2, Mode::Dano, 3, 2).unwrap();
        let mut state = TrainState::new_initial(&cfg, 1234).unwrap();
        state.params[0] = std::f64::consts::PI;
        state.params[1] = -1.0 / 3.0;
        state.m1[2] = 1e-17;
        state.m2[3] = 6.02214076e23;
        state.step = 99;
        state.epoch = 7;
        state.frozen[1] = true;

        let p = dir.path().join("ck.txt");
        write_checkpoint(&p, &state).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back.epoch, 7);
        assert_eq!(back.step, 99);
        assert_eq!(back.seed, 1234);
        assert_eq!(back.frozen, state.frozen);
        for (a, b) in back.params.iter().zip(&state.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.m1.iter().zip(&state.m1) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.m2.iter().zip(&state.m2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        std::fs::write(&p, "not a checkpoint\n").unwrap();
        assert!(read_checkpoint(&p).is_err());
    }

    #[test]
    fn feature_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = FeatureSetBuilder::new(2, 3);
        b.push(&[0.25, -1.5], 2, Split::Train).unwrap();
        b.push(&[1.0 / 3.0, 0.0], 0, Split::Test).unwrap();
        let fs = b.build().unwrap();
        let p = dir.path().join("cache.txt");
        write_feature_cache(&p, &fs).unwrap();
        let back = read_feature_cache(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.label(0), 2);
        assert_eq!(back.split(1), Split::Test);
        for i in 0..2 {
            for (a, b) in back.feature_row(i).iter().zip(fs.feature_row(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Byte-identical on rewrite.
        let p2 = dir.path().join("cache2.txt");
        write_feature_cache(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn kv_round_trip_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.txt");
        let pairs = vec![
            ("mode".to_string(), "dano".to_string()),
            ("seed".to_string(), "7".to_string()),
        ];
        write_kv(&p, &pairs).unwrap();
        assert_eq!(read_kv(&p).unwrap(), pairs);

        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(digest_hex(b"a"), format!("{:016x}", fnv1a64(b"a")));
        assert_ne!(digest_hex(b"a"), digest_hex(b"b"));
    }

    #[test]
    fn metrics_row_formatting() {
        let m = Metrics {
            epoch: 3,
            train_loss: 0.5,
            train_accuracy: 0.25,
            val_accuracy: None,
            test_accuracy: 0.75,
            wall_seconds: 1.25,
        };
        assert_eq!(metrics_csv_row(&m), "3,0.5,0.25,,0.75,1.25");
        let m = Metrics {
            val_accuracy: Some(0.1),
            ..m
        };
        assert!(metrics_csv_row(&m).contains(",0.1,"));
    }
}
