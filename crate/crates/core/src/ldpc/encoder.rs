use super::ParityCheckMatrix;
use crate::error::{Error, Result};

/// GF(2) encoder for an arbitrary parity-check matrix.
///
/// Matrices whose last `m` columns form the dual-diagonal (accumulator)
/// pattern are encoded by back-substitution in `O(ones)`; everything else
/// goes through Gaussian elimination with column pivoting, and the info
/// bits are placed on the non-pivot columns.
#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    info_positions: Vec<usize>,
    kind: EncoderKind,
    rank_deficiency: usize,
}

#[derive(Clone, Debug)]
enum EncoderKind {
    /// `H = [A | B]`, B lower bidiagonal.
    DualDiagonal { a_rows: Vec<Vec<usize>>, k: usize },
    /// Pivot column and the info-bit indices it sums, per pivot row.
    Dense { pivots: Vec<(usize, Vec<usize>)> },
}

fn is_dual_diagonal(pcm: &ParityCheckMatrix) -> bool {
    let (m, n) = (pcm.rows(), pcm.cols());
    if m == 0 || m > n {
        return false;
    }
    let k = n - m;
    (0..m).all(|j| {
        let col = pcm.col(k + j);
        if j + 1 < m {
            col == [j, j + 1]
        } else {
            col == [j]
        }
    })
}

impl Encoder {
    pub fn new(pcm: &ParityCheckMatrix) -> Result<Self> {
        let (m, n) = (pcm.rows(), pcm.cols());
        if n == 0 {
            return Err(Error::InvalidShape("empty parity-check matrix".into()));
        }
        if is_dual_diagonal(pcm) {
            let k = n - m;
            let a_rows = (0..m)
                .map(|r| pcm.row(r).iter().copied().filter(|&c| c < k).collect())
                .collect();
            return Ok(Self {
                n,
                info_positions: (0..k).collect(),
                kind: EncoderKind::DualDiagonal { a_rows, k },
                rank_deficiency: 0,
            });
        }
        Self::gaussian(pcm)
    }

    fn gaussian(pcm: &ParityCheckMatrix) -> Result<Self> {
        let (m, n) = (pcm.rows(), pcm.cols());
        let words = n.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = (0..m)
            .map(|r| {
                let mut w = vec![0u64; words];
                for &c in pcm.row(r) {
                    w[c / 64] |= 1 << (c % 64);
                }
                w
            })
            .collect();
        let bit = |row: &[u64], c: usize| (row[c / 64] >> (c % 64)) & 1 == 1;
        let mut pivot_cols = Vec::new();
        let mut rank = 0;
        for c in 0..n {
            if rank == m {
                break;
            }
            let Some(p) = (rank..m).find(|&r| bit(&rows[r], c)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && bit(row, c) {
                    for (a, b) in row.iter_mut().zip(&pivot) {
                        *a ^= b;
                    }
                }
            }
            pivot_cols.push(c);
            rank += 1;
        }
        let is_pivot: Vec<bool> = {
            let mut v = vec![false; n];
            for &c in &pivot_cols {
                v[c] = true;
            }
            v
        };
        let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let pivots = pivot_cols
            .iter()
            .enumerate()
            .map(|(r, &pc)| {
                let deps = info_positions
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| bit(&rows[r], c))
                    .map(|(i, _)| i)
                    .collect();
                (pc, deps)
            })
            .collect();
        Ok(Self {
            n,
            info_positions,
            kind: EncoderKind::Dense { pivots },
            rank_deficiency: m - rank,
        })
    }

    /// Code dimension `K = n − rank(H)`.
    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Redundant rows of `H`; `K` already accounts for them.
    pub fn rank_deficiency(&self) -> usize {
        self.rank_deficiency
    }

    /// Codeword positions carrying the info bits, in order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::InvalidLength(format!(
                "expected {} info bits, got {}",
                self.k(),
                info.len()
            )));
        }
        let mut c = vec![0u8; self.n];
        for (&p, &b) in self.info_positions.iter().zip(info) {
            c[p] = b & 1;
        }
        match &self.kind {
            EncoderKind::DualDiagonal { a_rows, k } => {
                let mut prev = 0u8;
                for (j, row) in a_rows.iter().enumerate() {
                    let s = row.iter().fold(0u8, |acc, &col| acc ^ c[col]);
                    prev ^= s;
                    c[k + j] = prev;
                }
            }
            EncoderKind::Dense { pivots } => {
                for (pc, deps) in pivots {
                    c[*pc] = deps.iter().fold(0u8, |acc, &i| acc ^ (info[i] & 1));
                }
            }
        }
        Ok(c)
    }

    pub fn extract_info(&self, word: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| word[p]).collect()
    }
}
