//! Time-resolved multichannel signal datasets: every time point is one
//! labeled sample (a length-N vector across all electrodes).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::util::{seeded_rng, shuffled_indices};

/// A validated dataset: `values` is n_samples x n_channels, one row per time
/// point; `labels[i]` is the class of row i. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDataset {
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub values: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl SignalDataset {
    pub fn new(
        values: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let (n_samples, n_channels) = values.dim();
        if n_channels < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 channels, got {n_channels}"
            )));
        }
        if n_samples == 0 {
            return Err(Error::InvalidDataset("empty dataset".into()));
        }
        if labels.len() != n_samples {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} samples",
                labels.len(),
                n_samples
            )));
        }
        for (s, row) in values.outer_iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        sample: s,
                        channel: c,
                    });
                }
            }
        }
        for (s, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::LabelOutOfRange {
                    sample: s,
                    label: l,
                    n_classes,
                });
            }
        }
        let class_names = if class_names.len() == n_classes {
            class_names
        } else {
            (0..n_classes).map(|c| format!("class{c}")).collect()
        };
        Ok(SignalDataset {
            n_channels,
            n_samples,
            n_classes,
            values,
            labels,
            class_names,
        })
    }

    /// One sample as a channel vector.
    pub fn sample(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Per-channel z-score computed on `train_indices` only, applied to every
    /// sample. Off by default; raw amplitudes pass through unchanged unless
    /// the caller opts in.
    pub fn zscore_on_train(&self, train_indices: &[usize]) -> SignalDataset {
        let n = train_indices.len().max(1) as f64;
        let mut out = self.clone();
        for c in 0..self.n_channels {
            let mean: f64 = train_indices.iter().map(|&i| self.values[[i, c]]).sum::<f64>() / n;
            let var: f64 = train_indices
                .iter()
                .map(|&i| (self.values[[i, c]] - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            let inv = if sd > 0.0 { 1.0 / sd } else { 0.0 };
            for s in 0..self.n_samples {
                out.values[[s, c]] = (self.values[[s, c]] - mean) * inv;
            }
        }
        out
    }
}

/// How a dataset is partitioned into train and test index sets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SplitKind {
    Holdout { train_fraction: f64 },
    KFold { k: usize, fold_id: usize },
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub kind: SplitKind,
}

/// Seeded shuffle then partition. Holdout puts the first
/// `floor(fraction * n)` shuffled indices in train; k-fold cuts the shuffled
/// order into k near-equal contiguous blocks and tests on block `fold_id`.
pub fn split(dataset: &SignalDataset, kind: SplitKind, seed: u64) -> Result<SplitPlan> {
    let n = dataset.n_samples;
    let order = shuffled_indices(n, seed, 0x5711);
    let (train, test) = match kind {
        SplitKind::Holdout { train_fraction } => {
            if !(0.0..=1.0).contains(&train_fraction) {
                return Err(Error::InvalidArgument(format!(
                    "train fraction {train_fraction} not in [0,1]"
                )));
            }
            let cut = (train_fraction * n as f64).floor() as usize;
            (order[..cut].to_vec(), order[cut..].to_vec())
        }
        SplitKind::KFold { k, fold_id } => {
            if k > n {
                return Err(Error::InvalidArgument(format!(
                    "k={k} exceeds {n} samples"
                )));
            }
            if k < 2 || fold_id >= k {
                return Err(Error::InvalidArgument(format!(
                    "invalid kfold(k={k}, fold_id={fold_id})"
                )));
            }
            let start = fold_id * n / k;
            let end = (fold_id + 1) * n / k;
            let test = order[start..end].to_vec();
            let mut train = order[..start].to_vec();
            train.extend_from_slice(&order[end..]);
            (train, test)
        }
        SplitKind::All => (Vec::new(), order),
    };
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed,
        kind,
    })
}

/// Deterministic synthetic dataset. Class `c` draws samples as a smooth
/// class-specific ring pattern scaled by `separation` plus unit Gaussian
/// noise, so classes become linearly separable as `separation` grows.
pub fn make_synthetic(
    n_channels: usize,
    n_per_class: usize,
    n_classes: usize,
    seed: u64,
    separation: f64,
) -> Result<SignalDataset> {
    if n_channels < 2 {
        return Err(Error::InvalidArgument("n_channels must be >= 2".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument("n_classes must be >= 2".into()));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
    }
    if separation < 0.0 {
        return Err(Error::InvalidArgument("separation must be >= 0".into()));
    }
    let n_samples = n_per_class * n_classes;
    let mut values = Array2::zeros((n_samples, n_channels));
    let mut labels = Vec::with_capacity(n_samples);
    let mut rng = seeded_rng(seed, 0x51a7);
    // Pattern for class c: cosine of ring frequency c+1, phase-shifted per
    // class. Smooth over the ring graph and pairwise linearly independent.
    let pattern = |c: usize, ch: usize| -> f64 {
        let t = ch as f64 / n_channels as f64;
        (2.0 * std::f64::consts::PI * ((c + 1) as f64 * t) + c as f64).cos()
    };
    for c in 0..n_classes {
        for s in 0..n_per_class {
            let row = c * n_per_class + s;
            labels.push(c);
            for ch in 0..n_channels {
                let noise: f64 = rng.sample(StandardNormal);
                values[[row, ch]] = pattern(c, ch) * separation + noise;
            }
        }
    }
    SignalDataset::new(values, labels, n_classes, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FileFormat {
    Csv,
    Binary,
}

const BINARY_MAGIC: &[u8; 4] = b"GCNS";
const BINARY_VERSION: u16 = 1;

pub fn load_dataset(path: &Path, format: FileFormat) -> Result<SignalDataset> {
    match format {
        FileFormat::Csv => load_csv(path),
        FileFormat::Binary => load_binary(path),
    }
}

pub fn save_dataset(dataset: &SignalDataset, path: &Path, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Csv => save_csv(dataset, path),
        FileFormat::Binary => save_binary(dataset, path),
    }
}

/// Guess the format from the magic bytes, falling back to CSV.
pub fn detect_format(path: &Path) -> FileFormat {
    let mut buf = [0u8; 4];
    match fs::File::open(path).and_then(|mut f| f.read_exact(&mut buf)) {
        Ok(()) if &buf == BINARY_MAGIC => FileFormat::Binary,
        _ => FileFormat::Csv,
    }
}

// CSV: header `channels=<N>,classes=<O>`, then one row per sample with N
// decimal reals followed by one integer label.
fn load_csv(path: &Path) -> Result<SignalDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedHeader {
        path: path.display().to_string(),
        detail: "empty file".into(),
    })?;
    let (n_channels, n_classes) = parse_csv_header(path, header)?;
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_channels + 1 {
            return Err(Error::TruncatedPayload {
                path: path.display().to_string(),
                detail: format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    n_channels + 1,
                    fields.len()
                ),
            });
        }
        for f in &fields[..n_channels] {
            let v: f64 = f.trim().parse().map_err(|_| Error::TruncatedPayload {
                path: path.display().to_string(),
                detail: format!("row {}: bad real '{}'", lineno + 2, f),
            })?;
            rows.push(v);
        }
        let label: usize =
            fields[n_channels]
                .trim()
                .parse()
                .map_err(|_| Error::TruncatedPayload {
                    path: path.display().to_string(),
                    detail: format!("row {}: bad label '{}'", lineno + 2, fields[n_channels]),
                })?;
        labels.push(label);
    }
    let n_samples = labels.len();
    let values = Array2::from_shape_vec((n_samples, n_channels), rows)
        .expect("row count consistent by construction");
    SignalDataset::new(values, labels, n_classes, Vec::new())
}

fn parse_csv_header(path: &Path, header: &str) -> Result<(usize, usize)> {
    let bad = |detail: String| Error::MalformedHeader {
        path: path.display().to_string(),
        detail,
    };
    let mut n_channels = None;
    let mut n_classes = None;
    for part in header.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got '{part}'")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad count '{value}'")))?;
        match key.trim() {
            "channels" => n_channels = Some(value),
            "classes" => n_classes = Some(value),
            other => return Err(bad(format!("unknown header key '{other}'"))),
        }
    }
    match (n_channels, n_classes) {
        (Some(n), Some(o)) => Ok((n, o)),
        _ => Err(bad("header must declare channels=<N>,classes=<O>".into())),
    }
}

fn save_csv(dataset: &SignalDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "channels={},classes={}\n",
        dataset.n_channels, dataset.n_classes
    ));
    for (row, &label) in dataset.values.outer_iter().zip(&dataset.labels) {
        for v in row.iter() {
            // `{}` on f64 is the shortest round-trip representation.
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// Binary: magic `GCNS`, u16 version=1, u32 n_channels, u32 n_classes,
// u64 n_samples, then f32 LE values row-major, then u8 labels.
fn load_binary(path: &Path) -> Result<SignalDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let header_err = |detail: &str| Error::MalformedHeader {
        path: p.clone(),
        detail: detail.into(),
    };
    if bytes.len() < 22 {
        return Err(header_err("file shorter than header"));
    }
    if &bytes[0..4] != BINARY_MAGIC {
        return Err(header_err("bad magic, expected GCNS"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BINARY_VERSION {
        return Err(header_err(&format!("unsupported version {version}")));
    }
    let n_channels = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let n_classes = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let n_samples = u64::from_le_bytes(bytes[14..22].try_into().unwrap()) as usize;
    let values_len = n_samples
        .checked_mul(n_channels)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| header_err("size overflow"))?;
    let expected = 22 + values_len + n_samples;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            path: p,
            detail: format!("expected {expected} bytes, got {}", bytes.len()),
        });
    }
    let mut rows = Vec::with_capacity(n_samples * n_channels);
    for chunk in bytes[22..22 + values_len].chunks_exact(4) {
        rows.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    let labels: Vec<usize> = bytes[22 + values_len..].iter().map(|&b| b as usize).collect();
    let values = Array2::from_shape_vec((n_samples, n_channels), rows)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    SignalDataset::new(values, labels, n_classes, Vec::new())
}

fn save_binary(dataset: &SignalDataset, path: &Path) -> Result<()> {
    if dataset.n_classes > u8::MAX as usize + 1 {
        return Err(Error::InvalidArgument(
            "binary format stores labels as u8".into(),
        ));
    }
    let mut out = Vec::with_capacity(22 + dataset.values.len() * 4 + dataset.n_samples);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.n_channels as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.n_classes as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.n_samples as u64).to_le_bytes());
    for v in dataset.values.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for &l in &dataset.labels {
        out.push(l as u8);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&out)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap().keep();
        dir.join(name)
    }

    #[test]
    fn csv_load_small() {
        let path = tmp("d.csv");
        fs::write(&path, "channels=3,classes=2\n1,2,3,0\n4,5,6,1\n7,8,9,0\n1,1,1,1\n").unwrap();
        let ds = load_dataset(&path, FileFormat::Csv).unwrap();
        assert_eq!(ds.n_channels, 3);
        assert_eq!(ds.n_samples, 4);
        assert_eq!(ds.labels, vec![0, 1, 0, 1]);
        assert_eq!(ds.values[[1, 2]], 6.0);
    }

    #[test]
    fn csv_label_out_of_range() {
        let path = tmp("d.csv");
        fs::write(&path, "channels=2,classes=4\n1,2,4\n").unwrap();
        let err = load_dataset(&path, FileFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 4, .. }));
    }

    #[test]
    fn csv_malformed_header() {
        let path = tmp("d.csv");
        fs::write(&path, "chans=2\n1,2,0\n").unwrap();
        assert!(matches!(
            load_dataset(&path, FileFormat::Csv).unwrap_err(),
            Error::MalformedHeader { .. }
        ));
    }

    #[test]
    fn csv_non_finite_value_rejected() {
        let path = tmp("d.csv");
        fs::write(&path, "channels=2,classes=2\nNaN,2,0\n").unwrap();
        assert!(load_dataset(&path, FileFormat::Csv).is_err());
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let ds = make_synthetic(5, 20, 3, 11, 1.5).unwrap();
        let path = tmp("rt.csv");
        save_dataset(&ds, &path, FileFormat::Csv).unwrap();
        let back = load_dataset(&path, FileFormat::Csv).unwrap();
        assert_eq!(ds.values, back.values);
        assert_eq!(ds.labels, back.labels);
    }

    #[test]
    fn binary_round_trip() {
        let ds = make_synthetic(4, 10, 2, 3, 1.0).unwrap();
        let path = tmp("rt.bin");
        save_dataset(&ds, &path, FileFormat::Binary).unwrap();
        let once = load_dataset(&path, FileFormat::Binary).unwrap();
        // One quantization to f32, then bit-stable thereafter.
        save_dataset(&once, &path, FileFormat::Binary).unwrap();
        let twice = load_dataset(&path, FileFormat::Binary).unwrap();
        assert_eq!(once.values, twice.values);
        assert_eq!(once.labels, ds.labels);
        assert_eq!(detect_format(&path), FileFormat::Binary);
    }

    #[test]
    fn binary_truncated_payload() {
        let ds = make_synthetic(4, 10, 2, 3, 1.0).unwrap();
        let path = tmp("t.bin");
        save_dataset(&ds, &path, FileFormat::Binary).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_dataset(&path, FileFormat::Binary).unwrap_err(),
            Error::TruncatedPayload { .. }
        ));
    }

    #[test]
    fn synthetic_deterministic() {
        let a = make_synthetic(8, 50, 4, 42, 2.0).unwrap();
        let b = make_synthetic(8, 50, 4, 42, 2.0).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn synthetic_zero_separation_uncorrelated() {
        // With separation 0 the labels carry no signal: correlation between
        // label and any channel mean stays small.
        let ds = make_synthetic(6, 1000, 4, 9, 0.0).unwrap();
        let n = ds.n_samples as f64;
        let lmean = ds.labels.iter().sum::<usize>() as f64 / n;
        for c in 0..ds.n_channels {
            let cmean = ds.values.column(c).sum() / n;
            let mut cov = 0.0;
            let mut vl = 0.0;
            let mut vc = 0.0;
            for s in 0..ds.n_samples {
                let dl = ds.labels[s] as f64 - lmean;
                let dc = ds.values[[s, c]] - cmean;
                cov += dl * dc;
                vl += dl * dl;
                vc += dc * dc;
            }
            let corr = cov / (vl.sqrt() * vc.sqrt());
            assert!(corr.abs() < 0.1, "channel {c}: corr {corr}");
        }
    }

    // Independent closed-form ridge classifier: solve
    // (X^T X + a I) W = X^T Y for one-hot Y by Gaussian elimination.
    fn ridge_accuracy(ds: &SignalDataset, plan: &SplitPlan) -> f64 {
        let d = ds.n_channels + 1; // bias column
        let o = ds.n_classes;
        let mut xtx = vec![vec![0.0; d]; d];
        let mut xty = vec![vec![0.0; o]; d];
        let feat = |s: usize, j: usize| if j < ds.n_channels { ds.values[[s, j]] } else { 1.0 };
        for &s in &plan.train_indices {
            for i in 0..d {
                for j in 0..d {
                    xtx[i][j] += feat(s, i) * feat(s, j);
                }
                xty[i][ds.labels[s]] += feat(s, i);
            }
        }
        for i in 0..d {
            xtx[i][i] += 1e-3;
        }
        // Gaussian elimination with partial pivoting.
        let mut a = xtx;
        let mut b = xty;
        for col in 0..d {
            let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let p = a[col][col];
            for r in 0..d {
                if r == col {
                    continue;
                }
                let f = a[r][col] / p;
                for j in 0..d {
                    a[r][j] -= f * a[col][j];
                }
                for j in 0..o {
                    b[r][j] -= f * b[col][j];
                }
            }
        }
        let w: Vec<Vec<f64>> = (0..d).map(|i| (0..o).map(|j| b[i][j] / a[i][i]).collect()).collect();
        let mut correct = 0usize;
        for &s in &plan.test_indices {
            let scores: Vec<f64> = (0..o)
                .map(|j| (0..d).map(|i| feat(s, i) * w[i][j]).sum())
                .collect();
            let pred = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            if pred == ds.labels[s] {
                correct += 1;
            }
        }
        correct as f64 / plan.test_indices.len() as f64
    }

    #[test]
    fn synthetic_separable_by_linear_classifier() {
        let ds = make_synthetic(16, 500, 4, 1, 3.0).unwrap();
        let plan = split(&ds, SplitKind::Holdout { train_fraction: 0.9 }, 5).unwrap();
        let acc = ridge_accuracy(&ds, &plan);
        assert!(acc > 0.9, "ridge oracle accuracy {acc}");
    }

    #[test]
    fn holdout_split_sizes() {
        let ds = make_synthetic(4, 5, 2, 0, 1.0).unwrap(); // n = 10
        let plan = split(&ds, SplitKind::Holdout { train_fraction: 0.9 }, 7).unwrap();
        assert_eq!(plan.train_indices.len(), 9);
        assert_eq!(plan.test_indices.len(), 1);
    }

    #[test]
    fn kfold_blocks_partition() {
        let ds = make_synthetic(4, 25, 4, 0, 1.0).unwrap(); // n = 100
        let mut seen = vec![false; 100];
        for fold_id in 0..10 {
            let plan = split(&ds, SplitKind::KFold { k: 10, fold_id }, 3).unwrap();
            assert_eq!(plan.test_indices.len(), 10);
            for &i in &plan.test_indices {
                assert!(!seen[i], "fold overlap at {i}");
                seen[i] = true;
            }
            let mut all: Vec<usize> = plan.train_indices.iter().chain(&plan.test_indices).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn split_deterministic() {
        let ds = make_synthetic(4, 25, 2, 0, 1.0).unwrap();
        let a = split(&ds, SplitKind::Holdout { train_fraction: 0.9 }, 7).unwrap();
        let b = split(&ds, SplitKind::Holdout { train_fraction: 0.9 }, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kfold_too_large_rejected() {
        let ds = make_synthetic(4, 2, 2, 0, 1.0).unwrap(); // n = 4
        assert!(split(&ds, SplitKind::KFold { k: 5, fold_id: 0 }, 0).is_err());
    }
}
