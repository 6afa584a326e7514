//! Dense user and item embedding tables plus the text checkpoint format.
//!
//! A checkpoint is a header line `dim N M` (optionally followed by
//! `key=value` flags such as `pretrained=true`) and then `N + M` rows of
//! space-separated decimal floats, user rows first.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Embeddings for every user and item. Rows are stored row-major, users and
/// items in separate blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    n_users: usize,
    n_items: usize,
    users: Vec<f64>,
    items: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(dim: usize, n_users: usize, n_items: usize) -> Self {
        Self {
            dim,
            n_users,
            n_items,
            users: vec![0.0; dim * n_users],
            items: vec![0.0; dim * n_items],
        }
    }

    /// Entries drawn i.i.d. from `N(0, std^2)`.
    pub fn random_normal<R: Rng + ?Sized>(dim: usize, n_users: usize, n_items: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let users = (0..dim * n_users).map(|_| normal.sample(rng)).collect();
        let items = (0..dim * n_items).map(|_| normal.sample(rng)).collect();
        Self {
            dim,
            n_users,
            n_items,
            users,
            items,
        }
    }

    pub fn from_parts(dim: usize, n_users: usize, n_items: usize, users: Vec<f64>, items: Vec<f64>) -> Result<Self> {
        if users.len() != dim * n_users || items.len() != dim * n_items {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} users and {}x{} items, got {} and {} values",
                n_users,
                dim,
                n_items,
                dim,
                users.len(),
                items.len()
            )));
        }
        Ok(Self {
            dim,
            n_users,
            n_items,
            users,
            items,
        })
    }

    /// Build from explicit rows. Handy in tests.
    pub fn from_rows(user_rows: &[Vec<f64>], item_rows: &[Vec<f64>]) -> Result<Self> {
        let dim = user_rows.first().or(item_rows.first()).map(Vec::len).unwrap_or(0);
        if user_rows.iter().chain(item_rows).any(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch("rows have differing lengths".into()));
        }
        Self::from_parts(
            dim,
            user_rows.len(),
            item_rows.len(),
            user_rows.concat(),
            item_rows.concat(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n_users == other.n_users && self.n_items == other.n_items
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn users_flat(&self) -> &[f64] {
        &self.users
    }

    pub fn items_flat(&self) -> &[f64] {
        &self.items
    }

    pub fn users_flat_mut(&mut self) -> &mut [f64] {
        &mut self.users
    }

    pub fn items_flat_mut(&mut self) -> &mut [f64] {
        &mut self.items
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.users, self.items)
    }

    pub fn is_finite(&self) -> bool {
        self.users.iter().chain(&self.items).all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.users.iter_mut().zip(&other.users) {
            *a += scale * b;
        }
        for (a, b) in self.items.iter_mut().zip(&other.items) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.users
            .iter_mut()
            .chain(self.items.iter_mut())
            .for_each(|v| *v *= factor);
    }

    /// Frobenius inner product over both blocks.
    pub fn inner(&self, other: &Self) -> f64 {
        self.users
            .iter()
            .zip(&other.users)
            .chain(self.items.iter().zip(&other.items))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.users
            .iter()
            .zip(&other.users)
            .chain(self.items.iter().zip(&other.items))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_checkpoint_string(&self, flags: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity((self.users.len() + self.items.len()) * 20);
        write!(out, "{} {} {}", self.dim, self.n_users, self.n_items).unwrap();
        for (k, v) in flags {
            write!(out, " {k}={v}").unwrap();
        }
        out.push('\n');
        let rows = self
            .users
            .chunks(self.dim.max(1))
            .take(self.n_users)
            .chain(self.items.chunks(self.dim.max(1)).take(self.n_items));
        for row in rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_checkpoint(&self, path: &Path, flags: &[(&str, &str)]) -> Result<()> {
        fs::write(path, self.to_checkpoint_string(flags))?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
        Self::parse_checkpoint(&fs::read_to_string(path)?)
    }

    pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Checkpoint("missing header".into()))?;
        let mut fields = header.split_whitespace();
        let mut next_usize = |name: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("header is missing {name}")))?
                .parse::<usize>()
                .map_err(|e| Error::Checkpoint(format!("bad {name} in header: {e}")))
        };
        let dim = next_usize("dim")?;
        let n_users = next_usize("N")?;
        let n_items = next_usize("M")?;
        let mut flags = Vec::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header flag `{f}`")))?;
            flags.push((k.to_string(), v.to_string()));
        }

        let mut values = Vec::with_capacity(dim * (n_users + n_items));
        let mut rows = 0;
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| Error::Checkpoint(format!("row {}: bad value `{tok}`: {e}", idx + 1)))?;
                values.push(v);
            }
            if values.len() - before != dim {
                return Err(Error::Checkpoint(format!(
                    "row {} has {} values, expected {dim}",
                    idx + 1,
                    values.len() - before
                )));
            }
            rows += 1;
        }
        if rows != n_users + n_items {
            return Err(Error::Checkpoint(format!(
                "expected {} rows, found {rows}",
                n_users + n_items
            )));
        }
        let items = values.split_off(dim * n_users);
        let table = Self::from_parts(dim, n_users, n_items, values, items)?;
        Ok(Checkpoint { table, flags })
    }
}

/// A parsed checkpoint: the table and any header flags.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub table: EmbeddingTable,
    pub flags: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn flag(&self, key: &str) -> Option<&str> {
        self.flags.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn is_pretrained(&self) -> bool {
        self.flag("pretrained") == Some("true")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
