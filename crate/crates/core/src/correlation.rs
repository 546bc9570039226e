//! Class-mean spectra and Pearson correlation matrices across
//! (device, activity) pairs, plus CSV heatmap export. Correlation is meant
//! to run on raw unscaled spectra: per-device min-max scaling would distort
//! exactly the cross-device comparison the matrix exists to show.

use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num::Real;
use crate::wire;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// n×n, symmetric, unit diagonal.
    pub values: Matrix<f64>,
}

/// Canonical "device-activity" label.
pub fn device_activity_label(device_id: &str, activity: &str) -> String {
    format!("{device_id}-{activity}")
}

/// Arithmetic mean of the class's feature rows, accumulated in f64.
pub fn class_mean_spectrum<T: Real>(ds: &LabeledDataset<T>, label: u16) -> Result<Vec<f64>> {
    let rows = ds.rows_of_class(label);
    if rows.is_empty() {
        return Err(Error::EmptyClass {
            class_index: label as usize,
        });
    }
    let mut mean = vec![0.0f64; ds.dim()];
    for &r in &rows {
        for (m, &v) in mean.iter_mut().zip(ds.features.row(r)) {
            *m += v.as_f64();
        }
    }
    let n = rows.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

fn has_variance(v: &[f64]) -> bool {
    v.iter().any(|&x| x != v[0])
}

/// Pearson correlation of every pair. The matrix is symmetric by
/// construction (each pair is computed once and mirrored) with an exact
/// unit diagonal.
pub fn correlate(vectors: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    if vectors.len() < 2 {
        return Err(Error::BadLength {
            detail: format!("correlation needs at least 2 vectors, got {}", vectors.len()),
        });
    }
    let dim = vectors[0].1.len();
    for (label, v) in vectors {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if v.is_empty() || !has_variance(v) {
            return Err(Error::ConstantVector {
                label: label.clone(),
            });
        }
    }
    let n = vectors.len();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        values.row_mut(i)[i] = 1.0;
        for j in i + 1..n {
            let r = pearson(&vectors[i].1, &vectors[j].1);
            values.row_mut(i)[j] = r;
            values.row_mut(j)[i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: vectors.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.row(i)[j]
    }

    /// Mean of values[i][j] over all given index pairs.
    pub fn mean_over(&self, pairs: &[(usize, usize)]) -> f64 {
        let sum: f64 = pairs.iter().map(|&(i, j)| self.get(i, j)).sum();
        sum / pairs.len().max(1) as f64
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV heatmap: a label header row and column, values to 4 decimals.
/// An n-label matrix becomes an (n+1)×(n+1) grid.
pub fn export_heatmap(m: &CorrelationMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("label");
    for l in &m.labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for (i, l) in m.labels.iter().enumerate() {
        out.push_str(&csv_field(l));
        for j in 0..m.n() {
            out.push(',');
            out.push_str(&format!("{:.4}", m.get(i, j)));
        }
        out.push('\n');
    }
    wire::write_atomic(path, out.as_bytes())
}

/// Read back an exported heatmap (values carry 4-decimal precision).
pub fn parse_heatmap(path: &Path) -> Result<CorrelationMatrix> {
    let corrupt = |detail: String| Error::CorruptLength {
        path: path.to_path_buf(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                offset: 0,
                source: e,
            }
        }
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| corrupt("empty heatmap".into()))?;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    if labels.is_empty() {
        return Err(corrupt("heatmap header has no labels".into()));
    }
    let n = labels.len();
    let mut values = Matrix::zeros(n, n);
    for (i, line) in lines.enumerate() {
        if i >= n {
            return Err(corrupt("heatmap has too many rows".into()));
        }
        let mut fields = line.split(',');
        let row_label = fields.next().unwrap_or_default();
        if row_label != labels[i] {
            return Err(corrupt(format!("row {i} label does not match header")));
        }
        let mut count = 0;
        for (j, f) in fields.enumerate() {
            if j >= n {
                return Err(corrupt(format!("row {i} has too many values")));
            }
            values.row_mut(i)[j] = f
                .parse::<f64>()
                .map_err(|_| corrupt(format!("row {i} holds a non-numeric value")))?;
            count += 1;
        }
        if count != n {
            return Err(corrupt(format!("row {i} has {count} values, expected {n}")));
        }
    }
    Ok(CorrelationMatrix { labels, values })
}
