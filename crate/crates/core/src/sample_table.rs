use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major table of `len` points in `dim` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    dim: usize,
    data: Vec<f64>,
}

impl SampleTable {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(invalid(
                "data",
                format!("length {} is not a multiple of dim {dim}", data.len()),
            ));
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// One-dimensional table from scalars.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Stacks two tables of equal dimension.
    pub fn concat(&self, other: &SampleTable) -> Result<SampleTable> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(SampleTable {
            dim: self.dim,
            data,
        })
    }
}

impl SampleTable {
    /// Reads a numeric CSV with a header row; every row must have the same
    /// number of columns.
    pub fn read_csv(path: impl AsRef<std::path::Path>) -> Result<SampleTable> {
        let mut reader = csv::Reader::from_path(path)?;
        let dim = reader.headers()?.len();
        let mut data = Vec::new();
        for record in reader.records() {
            for field in record?.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| invalid("samples", format!("`{field}` is not a number")))?;
                data.push(v);
            }
        }
        SampleTable::new(dim, data)
    }

    /// Writes a header `x0, x1, ...` and one row per sample. Values use the
    /// shortest representation that round-trips.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
