use serde::{Deserialize, Serialize};

use super::vocab::{Token, Vocab};
use crate::error::{Error, Result};

/// An `R × width` grid of codes, generated one column (time step) at a time.
///
/// A full generation has `width == T`; prefixes are shorter grids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeGrid {
    rows: Vec<Vec<Token>>,
}

impl CodeGrid {
    pub fn empty(n_rows: usize) -> Self {
        assert!(n_rows >= 1);
        Self {
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Token>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Degenerate("grid needs at least one row".into()));
        };
        let width = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::LengthMismatch {
                left: width,
                right: bad.len(),
            });
        }
        Ok(Self { rows })
    }

    /// Builds a grid from row-major codes (`row 0` first).
    pub fn from_row_major(n_rows: usize, width: usize, codes: &[Token]) -> Result<Self> {
        if n_rows == 0 || codes.len() != n_rows * width {
            return Err(Error::LengthMismatch {
                left: n_rows * width,
                right: codes.len(),
            });
        }
        if width == 0 {
            return Ok(Self::empty(n_rows));
        }
        Self::from_rows(codes.chunks(width).map(<[Token]>::to_vec).collect())
    }

    pub fn to_row_major(&self) -> Vec<Token> {
        self.rows.concat()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, r: usize) -> &[Token] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, t: usize) -> Token {
        self.rows[r][t]
    }

    pub fn column(&self, t: usize) -> impl Iterator<Item = Token> + '_ {
        self.rows.iter().map(move |row| row[t])
    }

    pub fn push_column(&mut self, column: &[Token]) {
        assert_eq!(column.len(), self.rows.len());
        for (row, &code) in self.rows.iter_mut().zip(column) {
            row.push(code);
        }
    }

    /// The first `width` columns.
    pub fn prefix(&self, width: usize) -> CodeGrid {
        let width = width.min(self.width());
        Self {
            rows: self.rows.iter().map(|r| r[..width].to_vec()).collect(),
        }
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        let v = vocab.size();
        match self.rows.iter().flatten().find(|&&c| c as usize >= v) {
            Some(&code) => Err(Error::CodeOutOfRange { code, vocab: v }),
            None => Ok(()),
        }
    }
}
