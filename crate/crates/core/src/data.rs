//! Feature and label files, in-memory datasets, and the synthetic benchmark.
//!
//! Feature file layout (little-endian):
//!
//! | bytes | field                          |
//! |-------|--------------------------------|
//! | 4     | magic `FEAT`                   |
//! | 2     | version (u16, currently 1)     |
//! | 4     | N rows (u32)                   |
//! | 4     | D columns (u32)                |
//! | 2     | element width in bits (32, 64) |
//! | ...   | N×D IEEE-754 values, row-major |
//!
//! Label files are text with one class index per line, optionally preceded by
//! a `classes=C` line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::index::Tracked;
use crate::linalg::Matrix;
use crate::objective::Batch;

pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const FEATURE_VERSION: u16 = 1;
const FEATURE_HEADER_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementWidth {
    F32,
    F64,
}

impl ElementWidth {
    fn bits(self) -> u16 {
        match self {
            ElementWidth::F32 => 32,
            ElementWidth::F64 => 64,
        }
    }

    fn bytes(self) -> u64 {
        u64::from(self.bits() / 8)
    }
}

/// Labeled feature rows with a fixed class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::Data(format!(
                "label {y} of sample {i} out of range for {classes} classes"
            )));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Batch {
            features: Matrix::from_vec(indices.len(), d, data).expect("row widths agree"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let b = self.batch(indices);
        Dataset {
            features: b.features,
            labels: b.labels,
            classes: self.classes,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                context: "dataset concatenation",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(
            Matrix::from_vec(self.len() + other.len(), self.dim(), data)?,
            labels,
            self.classes.max(other.classes),
        )
    }

    /// Per-class split: the first `round(test_fraction · n_c)` samples of
    /// each class (after a seeded shuffle) go to the test side.
    pub fn stratified_split(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for c in 0..self.classes {
            let mut members: Vec<usize> =
                (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let n_test = (members.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&members[..n_test]);
            train.extend_from_slice(&members[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (self.subset(&train), self.subset(&test))
    }

    pub fn save(&self, features: &Path, labels: &Path, width: ElementWidth) -> Result<()> {
        write_features(features, &self.features, width)?;
        write_labels(labels, &self.labels, Some(self.classes))
    }
}

pub fn write_features(path: &Path, features: &Matrix, width: ElementWidth) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features_to(BufWriter::new(file), features, width).map_err(|e| Error::io(path, e))
}

pub fn write_features_to<W: Write>(
    mut w: W,
    features: &Matrix,
    width: ElementWidth,
) -> std::io::Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_u16::<LittleEndian>(FEATURE_VERSION)?;
    w.write_u32::<LittleEndian>(features.rows() as u32)?;
    w.write_u32::<LittleEndian>(features.cols() as u32)?;
    w.write_u16::<LittleEndian>(width.bits())?;
    for &v in features.as_slice() {
        match width {
            ElementWidth::F32 => w.write_f32::<LittleEndian>(v as f32)?,
            ElementWidth::F64 => w.write_f64::<LittleEndian>(v)?,
        }
    }
    w.flush()
}

/// Reads a feature file; 32-bit values are widened to 64-bit.
pub fn read_features(path: &Path) -> Result<Matrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let actual_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    read_features_from(BufReader::new(file), path, Some(actual_len))
}

pub fn read_features_from<R: Read>(r: R, path: &Path, actual_len: Option<u64>) -> Result<Matrix> {
    let mut r = Tracked::new(r);
    let truncated = |off: u64| Error::format(path, off, "truncated feature file");

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated(r.offset))?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected FEAT"));
    }
    let version = r
        .read_u16::<LittleEndian>()
        .map_err(|_| truncated(r.offset))?;
    if version != FEATURE_VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported version {version}"),
        ));
    }
    let n = r
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated(r.offset))? as usize;
    let d = r
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated(r.offset))? as usize;
    let width = match r
        .read_u16::<LittleEndian>()
        .map_err(|_| truncated(r.offset))?
    {
        32 => ElementWidth::F32,
        64 => ElementWidth::F64,
        other => {
            return Err(Error::format(
                path,
                14,
                format!("element width {other} is not 32 or 64"),
            ))
        }
    };
    let expected_len = FEATURE_HEADER_LEN + (n as u64) * (d as u64) * width.bytes();
    if let Some(actual) = actual_len {
        if actual != expected_len {
            return Err(Error::format(
                path,
                actual.min(expected_len),
                format!("file is {actual} bytes but header implies {expected_len}"),
            ));
        }
    }

    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let off = r.offset;
        let v = match width {
            ElementWidth::F32 => {
                f64::from(r.read_f32::<LittleEndian>().map_err(|_| truncated(off))?)
            }
            ElementWidth::F64 => r.read_f64::<LittleEndian>().map_err(|_| truncated(off))?,
        };
        if !v.is_finite() {
            return Err(Error::format(path, off, "non-finite feature value"));
        }
        data.push(v);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(
            path,
            r.offset - 1,
            "trailing bytes after feature data",
        ));
    }
    Matrix::from_vec(n, d, data)
}

pub fn write_labels(path: &Path, labels: &[usize], classes: Option<usize>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        if let Some(c) = classes {
            writeln!(w, "classes={c}")?;
        }
        for y in labels {
            writeln!(w, "{y}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Parsed label file: the labels and the declared class count, if any.
pub fn read_labels(path: &Path) -> Result<(Vec<usize>, Option<usize>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels_from(BufReader::new(file), path)
}

pub fn read_labels_from<R: BufRead>(r: R, path: &Path) -> Result<(Vec<usize>, Option<usize>)> {
    let err = |line: usize, message: String| Error::Labels {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut labels = Vec::new();
    let mut classes = None;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(c) = text.strip_prefix("classes=") {
            if lineno != 1 {
                return Err(err(lineno, "classes= header must be the first line".into()));
            }
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad class count {c:?}")))?;
            if c == 0 {
                return Err(err(lineno, "class count must be positive".into()));
            }
            classes = Some(c);
            continue;
        }
        let y: usize = text
            .parse()
            .map_err(|_| err(lineno, format!("not a class index: {text:?}")))?;
        if let Some(c) = classes {
            if y >= c {
                return Err(err(
                    lineno,
                    format!("label {y} out of range for classes={c}"),
                ));
            }
        }
        labels.push(y);
    }
    Ok((labels, classes))
}

/// Loads features and labels and checks that they describe the same N items.
pub fn load_dataset(features: &Path, labels: &Path) -> Result<Dataset> {
    let matrix = read_features(features)?;
    let (ys, declared) = read_labels(labels)?;
    if ys.len() != matrix.rows() {
        return Err(Error::Data(format!(
            "{} has {} rows but {} has {} labels",
            features.display(),
            matrix.rows(),
            labels.display(),
            ys.len()
        )));
    }
    let classes = declared.unwrap_or_else(|| ys.iter().max().map_or(0, |m| m + 1));
    Dataset::new(matrix, ys, classes)
}

/// Parameters of the Gaussian-cluster benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Expected center norm relative to the expected noise norm.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 10,
            per_class: 100,
            dim: 64,
            separation: 3.0,
            seed: 7,
        }
    }
}

/// Gaussian clusters: centers ~ N(0, s²/D · I), samples = center + N(0, 1/D · I),
/// so centers have norm ≈ s and noise has norm ≈ 1. Rows are class-major.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.per_class < 2 || spec.dim == 0 {
        return Err(Error::Config(format!(
            "synthetic data needs classes >= 2, per_class >= 2, dim >= 1 (got {}, {}, {})",
            spec.classes, spec.per_class, spec.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.dim as f64).sqrt();
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.dim)
                .map(|_| {
                    spec.separation * scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                })
                .collect()
        })
        .collect();
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &mu in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data.push(mu + scale * noise);
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(n, spec.dim, data)?, labels, spec.classes)
}
