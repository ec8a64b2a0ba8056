//! Dataset and assignment files.
//!
//! The canonical dataset file is JSON:
//! `{"dimension": p, "items": [{"id": .., "mean": [..], "covariance": [[..], ..]}, ..]}`.
//! An item may give `precision` instead of `covariance`. The CSV alternative has
//! columns `id, mean_1..mean_p, cov_1_1..cov_p_p` (row-major). Assignment files are
//! CSV `id,cluster` with canonical 1-based cluster labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::model::{Dataset, GaussianItem, Partition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub id: String,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub dimension: usize,
    pub items: Vec<ItemRecord>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl DatasetFile {
    /// Covariances are taken from the items (inverted precisions).
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let covs: Vec<DMatrix<f64>> = dataset
            .items()
            .iter()
            .map(|it| it.covariance().clone())
            .collect();
        Self::build(dataset, covs.iter())
    }

    /// Writes the given covariances verbatim, e.g. the exact generated ones.
    pub fn with_covariances(dataset: &Dataset, covariances: &[SpdMatrix]) -> Result<Self> {
        if covariances.len() != dataset.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariances for {} items",
                covariances.len(),
                dataset.len()
            )));
        }
        Ok(Self::build(
            dataset,
            covariances.iter().map(SpdMatrix::matrix),
        ))
    }

    fn build<'a>(dataset: &Dataset, covs: impl Iterator<Item = &'a DMatrix<f64>>) -> Self {
        let items = dataset
            .items()
            .iter()
            .zip(covs)
            .map(|(it, c)| ItemRecord {
                id: it.id().to_string(),
                mean: it.mean().iter().copied().collect(),
                covariance: Some(rows_of(c)),
                precision: None,
            })
            .collect();
        DatasetFile {
            dimension: dataset.dimension(),
            items,
        }
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let p = self.dimension;
        let items = self
            .items
            .into_iter()
            .map(|rec| {
                if rec.mean.len() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "item `{}` has a mean of length {}, expected {p}",
                        rec.id,
                        rec.mean.len()
                    )));
                }
                let mean = DVector::from_vec(rec.mean);
                let matrix = |rows: &[Vec<f64>], what: &str| -> Result<SpdMatrix> {
                    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                        return Err(Error::DimensionMismatch(format!(
                            "item `{}`: {what} is not {p}x{p}",
                            rec.id
                        )));
                    }
                    SpdMatrix::from_rows(rows).map_err(|e| {
                        Error::NotPositiveDefinite(format!("item `{}` {what}: {e}", rec.id))
                    })
                };
                match (&rec.covariance, &rec.precision) {
                    (Some(c), None) => GaussianItem::from_covariance(
                        rec.id.clone(),
                        mean,
                        matrix(c, "covariance")?,
                    ),
                    (None, Some(g)) => {
                        GaussianItem::from_precision(rec.id.clone(), mean, matrix(g, "precision")?)
                    }
                    _ => Err(Error::Parse(format!(
                        "item `{}` needs exactly one of `covariance` and `precision`",
                        rec.id
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(items)
    }
}

pub fn read_dataset_json(reader: impl Read) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_reader(reader)?;
    file.into_dataset()
}

pub fn write_dataset_json(writer: impl Write, file: &DatasetFile) -> Result<()> {
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Shortest decimal text that parses back to the same `f64`, in exponent form
/// for very small or very large magnitudes.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn csv_header(p: usize) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend((1..=p).map(|i| format!("mean_{i}")));
    for i in 1..=p {
        h.extend((1..=p).map(|j| format!("cov_{i}_{j}")));
    }
    h
}

pub fn read_dataset_csv(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr.headers()?.len();
    // 1 + p + p² columns
    let p = (1..=width)
        .find(|&p| 1 + p + p * p == width)
        .ok_or_else(|| {
            Error::Parse(format!(
                "{width} columns do not match id, mean_1..mean_p, cov_1_1..cov_p_p"
            ))
        })?;
    let mut items = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}, column {}: {e}", line + 2, k + 1)))
        };
        let mean = (0..p).map(|k| num(1 + k)).collect::<Result<Vec<_>>>()?;
        let cov = (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| num(1 + p + i * p + j))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        items.push(ItemRecord {
            id: rec[0].to_string(),
            mean,
            covariance: Some(cov),
            precision: None,
        });
    }
    DatasetFile {
        dimension: p,
        items,
    }
    .into_dataset()
}

pub fn write_dataset_csv(writer: impl Write, file: &DatasetFile) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(file.dimension))?;
    for rec in &file.items {
        let cov = rec
            .covariance
            .as_ref()
            .ok_or_else(|| Error::Parse(format!("item `{}` has no covariance", rec.id)))?;
        let mut row = vec![rec.id.clone()];
        row.extend(rec.mean.iter().copied().map(format_f64));
        row.extend(cov.iter().flatten().copied().map(format_f64));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a dataset, choosing CSV or JSON by file extension.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_dataset_csv(f)
    } else {
        read_dataset_json(f)
    }
}

pub fn write_dataset(path: &Path, file: &DatasetFile) -> Result<()> {
    let f = File::create(path)?;
    if is_csv(path) {
        write_dataset_csv(f, file)
    } else {
        write_dataset_json(f, file)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    id: String,
    cluster: usize,
}

pub fn read_assignment(reader: impl Read, dataset: &Dataset) -> Result<Partition> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<AssignmentRow>, _>>()?;
    dataset.partition_from_assignment(rows.iter().map(|r| (r.id.as_str(), r.cluster)))
}

pub fn write_assignment(
    writer: impl Write,
    dataset: &Dataset,
    partition: &Partition,
) -> Result<()> {
    partition.check_len(dataset.len())?;
    let canon = partition.canonicalize();
    let mut w = csv::Writer::from_writer(writer);
    for (item, &label) in dataset.items().iter().zip(canon.labels()) {
        w.serialize(AssignmentRow {
            id: item.id().to_string(),
            cluster: label + 1,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// A square matrix stored as a JSON nested array, e.g. a prior precision.
pub fn read_matrix_json(reader: impl Read) -> Result<SpdMatrix> {
    let rows: Vec<Vec<f64>> = serde_json::from_reader(reader)?;
    SpdMatrix::from_rows(&rows)
}
