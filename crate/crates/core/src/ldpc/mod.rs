//! LDPC codes: parity-check matrices in alist form, GF(2) encoding and
//! flooding belief-propagation decoding.

mod alist;
mod codes;
mod decoder;
mod encoder;

pub use alist::{load_alist, write_alist};
pub use codes::{shipped_code, stand_in_code, ShippedCode};
pub use decoder::{boxplus, spa_decode, DecodeOutput};
pub use encoder::Encoder;

use crate::error::{Error, Result};

/// Sparse binary parity-check matrix with an optional puncture mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: usize,
    cols: usize,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    punctured: Vec<bool>,
}

impl ParityCheckMatrix {
    /// Builds from `(row, col)` positions of ones; duplicates are rejected.
    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut row_adj = vec![Vec::new(); rows];
        let mut col_adj = vec![Vec::new(); cols];
        for &(r, c) in entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidShape(format!("entry ({r}, {c}) outside {rows}×{cols}")));
            }
            row_adj[r].push(c);
            col_adj[c].push(r);
        }
        for (r, row) in row_adj.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidShape(format!("duplicate entry in row {r}")));
            }
        }
        for col in &mut col_adj {
            col.sort_unstable();
        }
        Ok(Self {
            rows,
            cols,
            row_adj,
            col_adj,
            punctured: vec![false; cols],
        })
    }

    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidShape("ragged dense matrix".into()));
        }
        let entries: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().filter(|(_, b)| **b != 0).map(move |(c, _)| (r, c)))
            .collect();
        Self::from_entries(m, n, &entries)
    }

    /// Marks the given columns as punctured (never transmitted).
    pub fn with_puncture(mut self, columns: Vec<usize>) -> Result<Self> {
        for c in columns {
            if c >= self.cols {
                return Err(Error::InvalidConfig(format!("puncture column {c} ≥ n = {}", self.cols)));
            }
            self.punctured[c] = true;
        }
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_adj[r]
    }

    pub fn col(&self, c: usize) -> &[usize] {
        &self.col_adj[c]
    }

    pub fn num_ones(&self) -> usize {
        self.row_adj.iter().map(Vec::len).sum()
    }

    pub fn is_punctured(&self, c: usize) -> bool {
        self.punctured[c]
    }

    pub fn puncture_mask(&self) -> &[bool] {
        &self.punctured
    }

    pub fn num_transmitted(&self) -> usize {
        self.punctured.iter().filter(|p| !**p).count()
    }

    /// `H·cᵀ` over GF(2).
    pub fn syndrome(&self, word: &[u8]) -> Vec<u8> {
        self.row_adj
            .iter()
            .map(|row| row.iter().fold(0u8, |acc, &c| acc ^ (word[c] & 1)))
            .collect()
    }

    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.cols && self.row_adj.iter().all(|row| row.iter().fold(0u8, |a, &c| a ^ (word[c] & 1)) == 0)
    }

    /// Bits that go on the channel, in codeword order.
    pub fn transmitted_bits(&self, word: &[u8]) -> Vec<u8> {
        word.iter()
            .zip(&self.punctured)
            .filter(|(_, p)| !**p)
            .map(|(b, _)| *b)
            .collect()
    }

    /// Transmitted-position entries of a full-length LLR vector.
    pub fn transmitted_llrs(&self, llrs: &[f64]) -> Vec<f64> {
        llrs.iter()
            .zip(&self.punctured)
            .filter(|(_, p)| !**p)
            .map(|(l, _)| *l)
            .collect()
    }

    /// Places received LLRs on the transmitted positions, zeros elsewhere.
    pub fn depuncture(&self, llrs: &[f64]) -> Vec<f64> {
        let mut it = llrs.iter();
        self.punctured
            .iter()
            .map(|&p| if p { 0.0 } else { *it.next().expect("length checked by caller") })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syndrome_and_puncturing() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        assert!(h.is_codeword(&[1, 1, 1]));
        assert!(!h.is_codeword(&[1, 0, 0]));
        assert_eq!(h.syndrome(&[1, 0, 0]), vec![1, 0]);
        let p = h.with_puncture(vec![1]).unwrap();
        assert_eq!(p.transmitted_bits(&[1, 0, 1]), vec![1, 1]);
        assert_eq!(p.depuncture(&[2.0, -3.0]), vec![2.0, 0.0, -3.0]);
        assert_eq!(p.num_transmitted(), 2);
    }

    #[test]
    fn duplicate_entries_rejected() {
        assert!(ParityCheckMatrix::from_entries(2, 2, &[(0, 0), (0, 0)]).is_err());
        assert!(ParityCheckMatrix::from_entries(2, 2, &[(2, 0)]).is_err());
    }
}
