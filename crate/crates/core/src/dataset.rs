//! Labelled binary datasets, CSV ingestion and the versioned JSON envelope.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Binary class label, `-1` or `+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Pos, Label::Neg];

    #[inline]
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Pos => T::one(),
            Label::Neg => -T::one(),
        }
    }

    #[inline]
    pub fn flip(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    pub fn as_i8(self) -> i8 {
        self.into()
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(format!("label must be -1 or +1, got {other}")),
        }
    }
}

/// One `(y, x)` pair borrowed from a dataset.
#[derive(Clone, Copy, Debug)]
pub struct LabeledSample<'a, T> {
    pub label: Label,
    pub features: &'a [T],
}

/// Rows of `(y, x)` with a shared input dimension, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    dim: usize,
    labels: Vec<Label>,
    features: Vec<T>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            labels: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            labels: Vec::with_capacity(n),
            features: Vec::with_capacity(n * dim),
        }
    }

    /// Builds a dataset from parallel label and row vectors.
    pub fn from_rows(dim: usize, labels: Vec<Label>, rows: Vec<Vec<T>>) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        let mut ds = Self::with_capacity(dim, labels.len());
        for (label, row) in labels.into_iter().zip(rows) {
            ds.push(label, &row)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, label: Label, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InconsistentDimension {
                row: self.labels.len() + 1,
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        self.labels.push(label);
        self.features.extend_from_slice(x);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, i: usize) -> LabeledSample<'_, T> {
        LabeledSample {
            label: self.labels[i],
            features: self.x(i),
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Row-major feature storage, `len() * dim()` values.
    pub fn flat_features(&self) -> &[T] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = LabeledSample<'_, T>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, rows.len());
        for &i in rows {
            out.labels.push(self.labels[i]);
            out.features.extend_from_slice(self.x(i));
        }
        out
    }

    pub fn with_flipped_labels(&self) -> Self {
        Self {
            dim: self.dim,
            labels: self.labels.iter().map(|l| l.flip()).collect(),
            features: self.features.clone(),
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }

    pub fn cast<U: Scalar>(&self) -> LabeledDataset<U> {
        LabeledDataset {
            dim: self.dim,
            labels: self.labels.clone(),
            features: self.features.iter().map(|v| U::c(v.to_f64_lossy())).collect(),
        }
    }
}

/// How a CSV dataset file is laid out: label in the first column followed by
/// the `d` feature columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CsvSpec {
    /// The first line is a header and is skipped.
    pub has_header: bool,
    /// Read labels as `{0, 1}` and map `0 → -1`, `1 → +1`. Without this flag
    /// a `0` label is an error.
    pub zero_one_labels: bool,
}

fn parse_label(field: &str, row: usize, spec: CsvSpec) -> Result<Label> {
    let trimmed = field.trim();
    let bad = || Error::InvalidLabel {
        row,
        value: trimmed.to_string(),
    };
    let v: f64 = trimmed.parse().map_err(|_| bad())?;
    let negative = if spec.zero_one_labels { 0.0 } else { -1.0 };
    if v == 1.0 {
        Ok(Label::Pos)
    } else if v == negative {
        Ok(Label::Neg)
    } else {
        Err(bad())
    }
}

/// Reads a dataset from CSV. Row numbers in errors are 1-based over data rows.
pub fn read_csv<T: Scalar, R: Read>(reader: R, spec: CsvSpec) -> Result<LabeledDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: Option<LabeledDataset<T>> = None;
    let mut row_buf = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut fields = record.iter();
        let label = parse_label(fields.next().unwrap_or(""), row, spec)?;
        row_buf.clear();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("cannot parse {f:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    reason: "non-finite feature".into(),
                });
            }
            row_buf.push(T::c(v));
        }
        let ds = out.get_or_insert_with(|| LabeledDataset::new(row_buf.len()));
        if row_buf.len() != ds.dim {
            return Err(Error::InconsistentDimension {
                row,
                expected: ds.dim,
                got: row_buf.len(),
            });
        }
        ds.push(label, &row_buf)?;
    }
    out.ok_or(Error::EmptyDataset)
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, spec: CsvSpec) -> Result<LabeledDataset<T>> {
    read_csv(File::open(path)?, spec)
}

/// Writes `label,x1,...,xd` rows without a header. Floats use Rust's shortest
/// round-trip formatting, so reading the file back reproduces the dataset.
pub fn write_csv<T: Scalar, W: Write>(data: &LabeledDataset<T>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    let mut fields = Vec::with_capacity(data.dim + 1);
    for s in data.iter() {
        fields.clear();
        fields.push(s.label.as_i8().to_string());
        fields.extend(s.features.iter().map(|v| v.to_string()));
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv<T: Scalar>(data: &LabeledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, File::create(path)?)
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Versioned JSON form `{version, dim, labels[], features[][]}`.
#[derive(Serialize, Deserialize)]
struct DatasetEnvelope<T> {
    version: u32,
    dim: usize,
    labels: Vec<Label>,
    features: Vec<Vec<T>>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn to_json(&self) -> Result<String> {
        let env = DatasetEnvelope {
            version: DATASET_FORMAT_VERSION,
            dim: self.dim,
            labels: self.labels.clone(),
            features: (0..self.len()).map(|i| self.x(i).to_vec()).collect(),
        };
        Ok(serde_json::to_string(&env)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: DatasetEnvelope<T> = serde_json::from_str(s)?;
        if env.version != DATASET_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(env.version));
        }
        Self::from_rows(env.dim, env.labels, env.features)
    }
}
