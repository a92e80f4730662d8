//! Columnar datasets with causal roles, and their CSV format.
//!
//! CSV files are comma separated with a header row and one numeric cell per
//! column. A vector-valued variable is several columns mapped to the same
//! role. Row numbers in errors are 1-based file lines, so the first data row
//! is row 2.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Causal role of a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Treatment.
    T,
    /// Outcome.
    Y,
    /// Adjustment covariates.
    X,
    /// Mediator (frontdoor) or shared intermediate (fusion).
    S,
    /// Effect modifiers.
    V,
    /// Instrument, or treatment-side proxy.
    Z,
    /// Outcome-side proxy.
    U,
}

impl Role {
    pub const ALL: [Role; 7] = [Role::T, Role::Y, Role::X, Role::S, Role::V, Role::Z, Role::U];

    pub fn name(self) -> &'static str {
        match self {
            Role::T => "t",
            Role::Y => "y",
            Role::X => "x",
            Role::S => "s",
            Role::V => "v",
            Role::Z => "z",
            Role::U => "u",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Malformed(format!("unknown role `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Column {
    name: String,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalDataset {
    columns: Vec<Column>,
    roles: BTreeMap<Role, Vec<usize>>,
    n: usize,
}

impl CausalDataset {
    /// Builds a dataset from named scalar columns with no roles assigned.
    pub fn from_columns<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let columns: Vec<Column> = columns
            .into_iter()
            .map(|(name, values)| Column {
                name: name.into(),
                values,
            })
            .collect();
        let n = columns.first().map_or(0, |c| c.values.len());
        if columns.is_empty() || n == 0 {
            return Err(Error::SampleTooSmall {
                needed: 1,
                found: 0,
            });
        }
        for (j, c) in columns.iter().enumerate() {
            if c.values.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: c.values.len(),
                });
            }
            if columns[..j].iter().any(|d| d.name == c.name) {
                return Err(Error::Malformed(format!("duplicate column `{}`", c.name)));
            }
            if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row: i + 2,
                    column: j + 1,
                    name: c.name.clone(),
                    message: "value is not finite".into(),
                });
            }
        }
        Ok(Self {
            columns,
            roles: BTreeMap::new(),
            n,
        })
    }

    /// Convenience constructor: one scalar column per role, named after it.
    pub fn from_roles(columns: Vec<(Role, Vec<f64>)>) -> Result<Self> {
        let roles: Vec<Role> = columns.iter().map(|(r, _)| *r).collect();
        let mut ds = Self::from_columns(
            columns
                .into_iter()
                .map(|(r, v)| (r.name(), v))
                .collect(),
        )?;
        for (j, r) in roles.into_iter().enumerate() {
            ds.roles.entry(r).or_default().push(j);
        }
        Ok(ds)
    }

    /// Maps a role to the named columns, replacing any earlier mapping.
    pub fn assign(&mut self, role: Role, names: &[&str]) -> Result<()> {
        if names.is_empty() {
            return Err(Error::Malformed(format!("role `{role}` mapped to no columns")));
        }
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let j = self
                .columns
                .iter()
                .position(|c| c.name == *name)
                .ok_or_else(|| Error::Malformed(format!("no column named `{name}` for role `{role}`")))?;
            idx.push(j);
        }
        self.roles.insert(role, idx);
        Ok(())
    }

    /// Builder form of [`assign`](Self::assign).
    pub fn with_role(mut self, role: Role, names: &[&str]) -> Result<Self> {
        self.assign(role, names)?;
        Ok(self)
    }

    /// Assigns every role whose name matches a column exactly, or a family
    /// of columns `x1, x2, …`. Existing mappings are kept.
    pub fn assign_default_roles(&mut self) {
        for role in Role::ALL {
            if self.roles.contains_key(&role) {
                continue;
            }
            let p = role.name();
            let idx: Vec<usize> = self
                .columns
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    c.name == p
                        || c.name
                            .strip_prefix(p)
                            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
                })
                .map(|(j, _)| j)
                .collect();
            if !idx.is_empty() {
                self.roles.insert(role, idx);
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains_key(&role)
    }

    /// Column names mapped to a role.
    pub fn role_columns(&self, role: Role) -> Result<Vec<&str>> {
        let idx = self.roles.get(&role).ok_or(Error::MissingRole(role))?;
        Ok(idx.iter().map(|&j| self.columns[j].name.as_str()).collect())
    }

    /// The role's columns as an `n × d` point set.
    pub fn points(&self, role: Role) -> Result<PointSet> {
        let idx = self.roles.get(&role).ok_or(Error::MissingRole(role))?;
        let cols: Vec<&[f64]> = idx.iter().map(|&j| self.columns[j].values.as_slice()).collect();
        PointSet::from_columns(&cols)
    }

    /// Values of a role mapped to a single column.
    pub fn scalar(&self, role: Role) -> Result<&[f64]> {
        let idx = self.roles.get(&role).ok_or(Error::MissingRole(role))?;
        if idx.len() != 1 {
            return Err(Error::Unsupported(format!(
                "role `{role}` is {}-dimensional, a scalar is required",
                idx.len()
            )));
        }
        Ok(&self.columns[idx[0]].values)
    }

    pub fn require(&self, roles: &[Role]) -> Result<()> {
        match roles.iter().find(|r| !self.has_role(**r)) {
            Some(r) => Err(Error::MissingRole(*r)),
            None => Ok(()),
        }
    }

    /// Rows in the given order, keeping columns and roles.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
            roles: self.roles.clone(),
            n: rows.len(),
        }
    }

    /// Parses CSV text and assigns default roles.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Malformed("missing header row".into()));
        }
        if let Some(j) = header.iter().position(String::is_empty) {
            return Err(Error::Data {
                row: 1,
                column: j + 1,
                name: String::new(),
                message: "empty column name".into(),
            });
        }
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != header.len() {
                return Err(Error::Data {
                    row,
                    column: record.len().min(header.len()) + 1,
                    name: header.get(record.len()).cloned().unwrap_or_default(),
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            for (j, cell) in record.iter().enumerate() {
                let bad = |message: String| Error::Data {
                    row,
                    column: j + 1,
                    name: header[j].clone(),
                    message,
                };
                if cell.is_empty() {
                    return Err(bad("missing value".into()));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| bad(format!("`{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(bad(format!("`{cell}` is not finite")));
                }
                values[j].push(v);
            }
        }
        if values[0].is_empty() {
            return Err(Error::Malformed("no data rows".into()));
        }
        let mut ds = Self::from_columns(header.into_iter().zip(values).collect())?;
        ds.assign_default_roles();
        Ok(ds)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Writes all columns with full round-trip precision.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(csv_error)?;
        for i in 0..self.n {
            w.write_record(self.columns.iter().map(|c| c.values[i].to_string()))
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        csv::ErrorKind::Utf8 { pos, .. } => Error::Data {
            row: pos.as_ref().map_or(0, |p| p.line() as usize),
            column: 0,
            name: String::new(),
            message: "invalid UTF-8".into(),
        },
        _ => Error::Malformed(e.to_string()),
    }
}
