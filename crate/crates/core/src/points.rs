//! Row-major point sets with optional named column blocks.
//!
//! A plain point set is an `n × d` table. A joint point set (built with
//! [`PointSet::join`]) additionally records which columns belong to which
//! named variable so that product kernels can pick out their factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A contiguous range of columns belonging to one named variable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    len: usize,
    dim: usize,
    blocks: Vec<Block>,
}

impl PointSet {
    /// Builds a point set from row-major data.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if data.len() % dim != 0 {
            return Err(Error::Malformed(format!(
                "{} values cannot be split into rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self {
            len: data.len() / dim,
            data,
            dim,
            blocks: Vec::new(),
        })
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            data: values.to_vec(),
            len: values.len(),
            dim: 1,
            blocks: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(1, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, dim)
    }

    /// A single point.
    pub fn point(values: &[f64]) -> Self {
        Self {
            data: values.to_vec(),
            len: 1,
            dim: values.len().max(1),
            blocks: Vec::new(),
        }
    }

    /// Builds one point set from columns, one slice per coordinate.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let dim = columns.len();
        let len = columns.first().map_or(0, |c| c.len());
        for c in columns {
            if c.len() != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: c.len(),
                });
            }
        }
        let mut data = Vec::with_capacity(len * dim);
        for i in 0..len {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::from_flat(data, dim)
    }

    /// Concatenates equally long point sets column-wise, naming each part.
    /// Parts that are themselves joint keep their inner blocks only through
    /// the outer name.
    pub fn join(parts: &[(&str, &PointSet)]) -> Result<Self> {
        let len = parts.first().map_or(0, |(_, p)| p.len);
        let mut blocks = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for (name, p) in parts {
            if p.len != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: p.len,
                });
            }
            if blocks.iter().any(|b: &Block| b.name == *name) {
                return Err(Error::Malformed(format!("duplicate block name `{name}`")));
            }
            blocks.push(Block {
                name: (*name).to_string(),
                offset,
                dim: p.dim,
            });
            offset += p.dim;
        }
        let dim = offset;
        let mut data = Vec::with_capacity(len * dim);
        for i in 0..len {
            for (_, p) in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self {
            data,
            len,
            dim,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn find_block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Extracts the columns of a named block as a plain point set.
    pub fn block(&self, name: &str) -> Result<PointSet> {
        let b = self
            .find_block(name)
            .ok_or_else(|| Error::Malformed(format!("point set has no block `{name}`")))?;
        let mut data = Vec::with_capacity(self.len * b.dim);
        for r in self.rows() {
            data.extend_from_slice(&r[b.offset..b.offset + b.dim]);
        }
        PointSet::from_flat(data, b.dim)
    }

    /// Values of a one-dimensional point set.
    pub fn scalars(&self) -> Result<&[f64]> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: self.dim,
            });
        }
        Ok(&self.data)
    }

    /// Rows in the given order (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointSet {
            data,
            len: indices.len(),
            dim: self.dim,
            blocks: self.blocks.clone(),
        }
    }

    /// Repeats a single-row set `n` times.
    pub fn repeat_row(&self, i: usize, n: usize) -> PointSet {
        self.select(&vec![i; n])
    }

    /// Appends the rows of `other` (same layout required).
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim || self.blocks != other.blocks {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(PointSet {
            data,
            len: self.len + other.len,
            dim: self.dim,
            blocks: self.blocks.clone(),
        })
    }
}
