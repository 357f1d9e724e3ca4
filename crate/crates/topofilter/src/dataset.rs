//! In-memory dataset and its on-disk encodings.
//!
//! Features are an `n x d` row-major `f32` matrix; labels are `u32` class ids.
//! Two encodings exist for each: a little-endian binary format (magic `TOPF`
//! for features, `TOPL` for labels) and a headerless CSV/text format for small
//! inputs. Binary layout:
//!
//! ```text
//! features: "TOPF" | u32 version=1 | u64 n | u32 d | n*d f32 (row-major)
//! labels:   "TOPL" | u32 version=1 | u64 n | u32 num_classes | n u32
//! ```
//!
//! All multi-byte values are little-endian. CSV loading is refused above
//! [`CSV_MAX_ROWS`] rows; use the binary format for large data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"TOPF";
pub const LABEL_MAGIC: &[u8; 4] = b"TOPL";
pub const FORMAT_VERSION: u32 = 1;
/// CSV is a convenience for small inputs only.
pub const CSV_MAX_ROWS: usize = 100_000;

/// Borrowed view of an `n x d` row-major feature matrix.
#[derive(Clone, Copy)]
pub struct FeaturesView<'a> {
    pub data: &'a [f32],
    pub n: usize,
    pub d: usize,
}

impl<'a> FeaturesView<'a> {
    pub fn new(data: &'a [f32], n: usize, d: usize) -> Self {
        assert_eq!(data.len(), n * d, "feature buffer must be n*d");
        FeaturesView { data, n, d }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// A labeled sample collection. `noisy_labels` drive selection; `true_labels`
/// are optional ground truth used only by evaluation metrics.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f32>,
    n: usize,
    d: usize,
    num_classes: usize,
    noisy_labels: Vec<u32>,
    true_labels: Option<Vec<u32>>,
}

impl Dataset {
    /// Build and validate a dataset. `num_classes` defaults to
    /// `1 + max(label)` over both label vectors when `None`.
    pub fn new(
        features: Vec<f32>,
        d: usize,
        noisy_labels: Vec<u32>,
        true_labels: Option<Vec<u32>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Invalid("feature dimension must be >= 1".into()));
        }
        if features.len() % d != 0 {
            return Err(Error::Invalid(format!(
                "feature buffer length {} is not a multiple of d={}",
                features.len(),
                d
            )));
        }
        let n = features.len() / d;
        if n == 0 {
            return Err(Error::Invalid("dataset must contain at least one sample".into()));
        }
        if noisy_labels.len() != n {
            return Err(Error::Invalid(format!(
                "label count {} does not match sample count {}",
                noisy_labels.len(),
                n
            )));
        }
        if let Some(t) = &true_labels {
            if t.len() != n {
                return Err(Error::Invalid(format!(
                    "true-label count {} does not match sample count {}",
                    t.len(),
                    n
                )));
            }
        }
        for (row, chunk) in features.chunks_exact(d).enumerate() {
            if let Some(col) = chunk.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "non-finite feature value at row {row}, column {col}"
                )));
            }
        }
        let observed_max = noisy_labels
            .iter()
            .chain(true_labels.iter().flatten())
            .copied()
            .max()
            .unwrap_or(0) as usize;
        let num_classes = match num_classes {
            Some(c) => {
                if observed_max >= c {
                    return Err(Error::Invalid(format!(
                        "label {observed_max} out of range for {c} classes"
                    )));
                }
                c
            }
            None => observed_max + 1,
        };
        Ok(Dataset {
            features,
            n,
            d,
            num_classes,
            noisy_labels,
            true_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> FeaturesView<'_> {
        FeaturesView::new(&self.features, self.n, self.d)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn noisy_labels(&self) -> &[u32] {
        &self.noisy_labels
    }

    pub fn true_labels(&self) -> Option<&[u32]> {
        self.true_labels.as_deref()
    }

    /// Replace the noisy labels (used after noise injection).
    pub fn with_noisy_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Invalid(format!(
                "label count {} does not match sample count {}",
                labels.len(),
                self.n
            )));
        }
        if let Some(&max) = labels.iter().max() {
            if max as usize >= self.num_classes {
                return Err(Error::Invalid(format!(
                    "label {max} out of range for {} classes",
                    self.num_classes
                )));
            }
        }
        self.noisy_labels = labels;
        Ok(self)
    }
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("{}: truncated while reading {what}", path.display())))
}

/// Write features in the binary `TOPF` encoding.
pub fn write_features_binary(path: impl AsRef<Path>, view: FeaturesView<'_>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(view.n as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(view.d as u32).to_le_bytes()).map_err(io)?;
    for v in view.data {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read a binary `TOPF` feature file; returns `(data, n, d)`.
pub fn read_features_binary(path: impl AsRef<Path>) -> Result<(Vec<f32>, usize, usize)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, path, "magic")?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"TOPF\"",
            path.display(),
            magic
        )));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact_at(&mut r, &mut b4, path, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported feature format version {version}",
            path.display()
        )));
    }
    read_exact_at(&mut r, &mut b8, path, "sample count")?;
    let n = u64::from_le_bytes(b8) as usize;
    read_exact_at(&mut r, &mut b4, path, "dimension")?;
    let d = u32::from_le_bytes(b4) as usize;
    let mut data = vec![0f32; n * d];
    for v in data.iter_mut() {
        read_exact_at(&mut r, &mut b4, path, "feature payload")?;
        *v = f32::from_le_bytes(b4);
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after {} features",
            path.display(),
            n * d
        )));
    }
    Ok((data, n, d))
}

/// Write labels in the binary `TOPL` encoding.
pub fn write_labels_binary(path: impl AsRef<Path>, labels: &[u32], num_classes: usize) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(LABEL_MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(labels.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(num_classes as u32).to_le_bytes()).map_err(io)?;
    for v in labels {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read a binary `TOPL` label file; returns `(labels, num_classes)`.
pub fn read_labels_binary(path: impl AsRef<Path>) -> Result<(Vec<u32>, usize)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, path, "magic")?;
    if &magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"TOPL\"",
            path.display(),
            magic
        )));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact_at(&mut r, &mut b4, path, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported label format version {version}",
            path.display()
        )));
    }
    read_exact_at(&mut r, &mut b8, path, "sample count")?;
    let n = u64::from_le_bytes(b8) as usize;
    read_exact_at(&mut r, &mut b4, path, "class count")?;
    let num_classes = u32::from_le_bytes(b4) as usize;
    let mut labels = vec![0u32; n];
    for v in labels.iter_mut() {
        read_exact_at(&mut r, &mut b4, path, "label payload")?;
        *v = u32::from_le_bytes(b4);
        if *v as usize >= num_classes {
            return Err(Error::Format(format!(
                "{}: label {} out of range for {} classes",
                path.display(),
                v,
                num_classes
            )));
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after {n} labels",
            path.display()
        )));
    }
    Ok((labels, num_classes))
}

/// Read headerless CSV features: one sample per line, comma-separated decimals.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<(Vec<f32>, usize, usize)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut d = None;
    let mut rows = 0usize;
    for (row, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if rows == CSV_MAX_ROWS {
            return Err(Error::Format(format!(
                "{}: CSV inputs are limited to {CSV_MAX_ROWS} rows; use the binary format",
                path.display()
            )));
        }
        let mut width = 0usize;
        for field in line.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}: row {row}: cannot parse {field:?} as a number",
                    path.display()
                ))
            })?;
            data.push(v);
            width += 1;
        }
        match d {
            None => d = Some(width),
            Some(expect) if expect != width => {
                return Err(Error::Format(format!(
                    "{}: row {row} has {width} columns, expected {expect}",
                    path.display()
                )));
            }
            _ => {}
        }
        rows += 1;
    }
    let d = d.ok_or_else(|| Error::Format(format!("{}: no data rows", path.display())))?;
    Ok((data, rows, d))
}

/// Read headerless label text: one integer per line.
pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (row, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if labels.len() == CSV_MAX_ROWS {
            return Err(Error::Format(format!(
                "{}: label text inputs are limited to {CSV_MAX_ROWS} rows; use the binary format",
                path.display()
            )));
        }
        let v: u32 = t.parse().map_err(|_| {
            Error::Format(format!(
                "{}: row {row}: cannot parse {t:?} as a label",
                path.display()
            ))
        })?;
        labels.push(v);
    }
    Ok(labels)
}

fn has_magic(path: &Path, magic: &[u8; 4]) -> Result<bool> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = [0u8; 4];
    match file.read_exact(&mut buf) {
        Ok(()) => Ok(&buf == magic),
        Err(_) => Ok(false),
    }
}

/// Load features from either encoding, sniffing the binary magic.
pub fn load_features(path: impl AsRef<Path>) -> Result<(Vec<f32>, usize, usize)> {
    let path = path.as_ref();
    if has_magic(path, FEATURE_MAGIC)? {
        read_features_binary(path)
    } else {
        read_features_csv(path)
    }
}

/// Load labels from either encoding, sniffing the binary magic.
/// Returns `(labels, num_classes_hint)`; the hint is `None` for text input.
pub fn load_labels(path: impl AsRef<Path>) -> Result<(Vec<u32>, Option<usize>)> {
    let path = path.as_ref();
    if has_magic(path, LABEL_MAGIC)? {
        let (labels, c) = read_labels_binary(path)?;
        Ok((labels, Some(c)))
    } else {
        Ok((read_labels_csv(path)?, None))
    }
}

/// Load a full dataset from feature + label files (binary or text), with
/// optional ground-truth labels.
pub fn load_dataset(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    true_labels_path: Option<&Path>,
) -> Result<Dataset> {
    let (data, n, d) = load_features(features_path)?;
    let (noisy, c_hint) = load_labels(labels_path)?;
    if noisy.len() != n {
        return Err(Error::Invalid(format!(
            "feature file has {n} samples but label file has {}",
            noisy.len()
        )));
    }
    let mut num_classes = c_hint;
    let true_labels = match true_labels_path {
        Some(p) => {
            let (t, tc) = load_labels(p)?;
            if let (Some(a), Some(b)) = (num_classes, tc) {
                if a != b {
                    return Err(Error::Invalid(format!(
                        "label files disagree on class count: {a} vs {b}"
                    )));
                }
            }
            num_classes = num_classes.or(tc);
            Some(t)
        }
        None => None,
    };
    Dataset::new(data, d, noisy, true_labels, num_classes)
}
