use std::fmt::Write as _;

use super::ParityCheckMatrix;
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank line as parsed integers, with its 1-based number.
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<usize>)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("expected integer in {what}, found `{t}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok((i + 1, values));
        }
        Err(Error::Parse {
            line: 0,
            message: format!("unexpected end of input while reading {what}"),
        })
    }
}

fn expect_len(line: usize, values: &[usize], n: usize, what: &str) -> Result<()> {
    if values.len() != n {
        return Err(Error::Parse {
            line,
            message: format!("{what}: expected {n} values, found {}", values.len()),
        });
    }
    Ok(())
}

/// Parses MacKay's alist format. Zero padding in the adjacency lists is
/// accepted; the column and row lists must describe the same matrix.
pub fn load_alist(text: &str) -> Result<ParityCheckMatrix> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, dims) = lines.next_ints("dimensions")?;
    expect_len(ln, &dims, 2, "dimension header")?;
    let (n, m) = (dims[0], dims[1]);
    let (ln, maxd) = lines.next_ints("maximum degrees")?;
    expect_len(ln, &maxd, 2, "maximum degree header")?;
    let (ln_c, col_deg) = lines.next_ints("column degrees")?;
    expect_len(ln_c, &col_deg, n, "column degree list")?;
    let (ln_r, row_deg) = lines.next_ints("row degrees")?;
    expect_len(ln_r, &row_deg, m, "row degree list")?;
    if col_deg.iter().any(|&d| d > maxd[0]) {
        return Err(Error::Parse {
            line: ln_c,
            message: format!("column degree exceeds declared maximum {}", maxd[0]),
        });
    }
    if row_deg.iter().any(|&d| d > maxd[1]) {
        return Err(Error::Parse {
            line: ln_r,
            message: format!("row degree exceeds declared maximum {}", maxd[1]),
        });
    }
    if col_deg.iter().sum::<usize>() != row_deg.iter().sum::<usize>() {
        return Err(Error::Parse {
            line: ln_r,
            message: "column and row degree sums differ".into(),
        });
    }

    let mut entries = Vec::new();
    for (c, &deg) in col_deg.iter().enumerate() {
        let (ln, vals) = lines.next_ints("column adjacency")?;
        let nz: Vec<usize> = vals.iter().copied().filter(|&v| v != 0).collect();
        if nz.len() != deg {
            return Err(Error::Parse {
                line: ln,
                message: format!("column {} lists {} rows, degree is {deg}", c + 1, nz.len()),
            });
        }
        for r in nz {
            if r > m {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("row index {r} > {m}"),
                });
            }
            entries.push((r - 1, c));
        }
    }
    let mut row_entries = Vec::new();
    for (r, &deg) in row_deg.iter().enumerate() {
        let (ln, vals) = lines.next_ints("row adjacency")?;
        let nz: Vec<usize> = vals.iter().copied().filter(|&v| v != 0).collect();
        if nz.len() != deg {
            return Err(Error::Parse {
                line: ln,
                message: format!("row {} lists {} columns, degree is {deg}", r + 1, nz.len()),
            });
        }
        for c in nz {
            if c > n {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("column index {c} > {n}"),
                });
            }
            row_entries.push((r, c - 1));
        }
    }
    let mut a = entries.clone();
    let mut b = row_entries;
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(Error::Parse {
            line: 0,
            message: "row and column adjacency lists disagree".into(),
        });
    }
    ParityCheckMatrix::from_entries(m, n, &entries).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// Writes alist text with zero padding to the maximum degree.
pub fn write_alist(pcm: &ParityCheckMatrix) -> String {
    let (m, n) = (pcm.rows(), pcm.cols());
    let max_col = (0..n).map(|c| pcm.col(c).len()).max().unwrap_or(0);
    let max_row = (0..m).map(|r| pcm.row(r).len()).max().unwrap_or(0);
    let mut out = String::new();
    let join = |v: Vec<String>| v.join(" ");
    let _ = writeln!(out, "{n} {m}");
    let _ = writeln!(out, "{max_col} {max_row}");
    let _ = writeln!(out, "{}", join((0..n).map(|c| pcm.col(c).len().to_string()).collect()));
    let _ = writeln!(out, "{}", join((0..m).map(|r| pcm.row(r).len().to_string()).collect()));
    for c in 0..n {
        let mut v: Vec<String> = pcm.col(c).iter().map(|r| (r + 1).to_string()).collect();
        v.resize(max_col, "0".into());
        let _ = writeln!(out, "{}", join(v));
    }
    for r in 0..m {
        let mut v: Vec<String> = pcm.row(r).iter().map(|c| (c + 1).to_string()).collect();
        v.resize(max_row, "0".into());
        let _ = writeln!(out, "{}", join(v));
    }
    out
}
