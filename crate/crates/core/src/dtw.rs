//! Dynamic Time Warping: frame costs, closed-start alignment, and the
//! open-start streaming cost matrix used for spotting.
//!
//! Matrix coordinates are `(row, col)` with row 0 and column 0 the boundary;
//! row `i` is model frame `i - 1` and column `j` is query frame `j - 1`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Sequence};

/// L2 distance between two frames.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(euclidean_unchecked(a, b))
}

#[inline]
pub(crate) fn euclidean_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Which neighbour a cell's accumulated cost came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    /// From `(i - 1, j - 1)`.
    Diag,
    /// From `(i, j - 1)`: one more query frame on the same model frame.
    Left,
    /// From `(i - 1, j)`: one more model frame on the same query frame.
    Up,
    /// Unreachable cell.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// `M(0, 0) = 0` and `M(0, j > 0) = inf`: the path must start at `(1, 1)`.
    Closed,
    /// `M(0, j) = 0` for every `j`: the path may start at any query frame.
    Open,
}

/// Monotone, contiguous list of 1-based matrix cells, ordered from start to end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath {
    steps: Vec<(usize, usize)>,
}

impl WarpingPath {
    pub fn new(steps: Vec<(usize, usize)>) -> Self {
        Self { steps }
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    /// Path length τ.
    pub fn tau(&self) -> usize {
        self.steps.len()
    }

    pub fn first(&self) -> Option<(usize, usize)> {
        self.steps.first().copied()
    }

    pub fn last(&self) -> Option<(usize, usize)> {
        self.steps.last().copied()
    }

    /// Checks continuity, monotonicity and the boundary conditions for a
    /// `rows`-row model ending at column `end_col`.
    pub fn is_valid(&self, rows: usize, end_col: usize, mode: StartMode) -> bool {
        let (Some(first), Some(last)) = (self.first(), self.last()) else {
            return false;
        };
        let start_ok = match mode {
            StartMode::Closed => first == (1, 1),
            StartMode::Open => first.0 == 1 && first.1 >= 1,
        };
        let steps_ok = self.steps.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            di <= 1 && dj <= 1 && di + dj > 0
        });
        start_ok && steps_ok && last == (rows, end_col)
    }
}

/// Result of [`dtw_align`].
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `M(m, n)`.
    pub accumulated: f64,
    /// `M(m, n) / τ`.
    pub normalized: f64,
    pub path: WarpingPath,
}

/// Column-by-column DTW accumulation matrix.
///
/// Only the newest column of costs is kept; per-cell [`Move`] tags are kept
/// for the most recent `depth` columns so a path ending in any of them can be
/// recovered. Ties between neighbours prefer diagonal, then left, then up.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    mode: StartMode,
    column: Vec<f64>,
    prev: Vec<f64>,
    moves: VecDeque<Vec<Move>>,
    depth: Option<usize>,
    cols: usize,
    boundary_col: usize,
}

impl CostMatrix {
    /// A matrix for an `rows`-frame model. `depth` bounds how many columns of
    /// move tags are retained; `None` keeps all of them.
    pub fn new(rows: usize, mode: StartMode, depth: Option<usize>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Empty("cost matrix needs at least one model row"));
        }
        if depth == Some(0) {
            return Err(Error::invalid("move buffer depth must be positive"));
        }
        let mut column = vec![f64::INFINITY; rows + 1];
        column[0] = 0.0;
        Ok(Self {
            rows,
            mode,
            prev: column.clone(),
            column,
            moves: VecDeque::new(),
            depth,
            cols: 0,
            boundary_col: 0,
        })
    }

    /// Open-start matrix keeping `4 * rows` columns of move tags.
    pub fn open(rows: usize) -> Result<Self> {
        Self::new(rows, StartMode::Open, Some(4 * rows.max(1)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn mode(&self) -> StartMode {
        self.mode
    }

    /// Index of the newest column (0 before any query frame).
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Costs of the newest column, rows `0..=m`.
    pub fn column(&self) -> &[f64] {
        &self.column
    }

    /// `M(m, cols)`.
    pub fn bottom(&self) -> f64 {
        self.column[self.rows]
    }

    /// Oldest column whose move tags are still available.
    pub fn oldest_retained(&self) -> usize {
        self.cols + 1 - self.moves.len()
    }

    /// Appends one query frame given each model row's frame cost; returns `M(m, k)`.
    pub fn push_column(&mut self, row_costs: &[f64]) -> Result<f64> {
        if row_costs.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: row_costs.len(),
            });
        }
        if let Some(bad) = row_costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::invalid(format!("frame cost must be finite and >= 0, got {bad}")));
        }
        std::mem::swap(&mut self.prev, &mut self.column);
        let mut tags = match self.depth {
            Some(d) if self.moves.len() >= d => self.moves.pop_front().expect("non-empty"),
            _ => Vec::with_capacity(self.rows),
        };
        tags.clear();

        self.column[0] = match self.mode {
            StartMode::Open => 0.0,
            StartMode::Closed => f64::INFINITY,
        };
        for i in 1..=self.rows {
            let diag = self.prev[i - 1];
            let left = self.prev[i];
            let up = self.column[i - 1];
            let (mut best, mut tag) = (diag, Move::Diag);
            if left < best {
                best = left;
                tag = Move::Left;
            }
            if up < best {
                best = up;
                tag = Move::Up;
            }
            if best.is_infinite() {
                self.column[i] = f64::INFINITY;
                tags.push(Move::None);
            } else {
                self.column[i] = row_costs[i - 1] + best;
                tags.push(tag);
            }
        }
        self.moves.push_back(tags);
        self.cols += 1;
        Ok(self.bottom())
    }

    pub(crate) fn load_column(&mut self, column: &[f64]) {
        self.column.copy_from_slice(column);
    }

    /// Makes the newest column a fresh boundary column, as if the query
    /// restarted after it.
    pub fn reset(&mut self) {
        self.column.fill(f64::INFINITY);
        self.column[0] = 0.0;
        self.boundary_col = self.cols;
    }

    /// Move tag of cell `(row, col)`, if retained.
    pub fn move_at(&self, row: usize, col: usize) -> Option<Move> {
        if row == 0 || row > self.rows || col == 0 || col > self.cols || col < self.oldest_retained() {
            return None;
        }
        let idx = self.moves.len() - 1 - (self.cols - col);
        Some(self.moves[idx][row - 1])
    }

    /// Recovers the minimizing path from `(m, end_col)` back to row 0.
    ///
    /// The begin column of the match is the column of the path's first step.
    pub fn backtrack(&self, end_col: usize) -> Result<WarpingPath> {
        self.trace(end_col, false).map(|(path, _)| path)
    }

    /// Like [`backtrack`](Self::backtrack), but a path that would leave the
    /// retained move buffer is cut at the oldest retained column instead of
    /// failing. The flag reports whether that happened.
    pub fn backtrack_clipped(&self, end_col: usize) -> Result<(WarpingPath, bool)> {
        self.trace(end_col, true)
    }

    fn trace(&self, end_col: usize, clip: bool) -> Result<(WarpingPath, bool)> {
        if end_col <= self.boundary_col || end_col > self.cols || end_col < self.oldest_retained() {
            return Err(Error::OutOfRange {
                index: end_col,
                valid: format!("{}..={}", self.oldest_retained().max(self.boundary_col + 1), self.cols),
            });
        }
        let mut steps = Vec::with_capacity(self.rows * 2);
        let (mut i, mut j) = (self.rows, end_col);
        let mut clipped = false;
        while i > 0 {
            let Some(tag) = self.move_at(i, j) else {
                if clip {
                    clipped = true;
                    break;
                }
                return Err(Error::invalid(format!(
                    "warping path leaves the retained move buffer at column {j} (oldest {})",
                    self.oldest_retained()
                )));
            };
            steps.push((i, j));
            match tag {
                Move::Diag => {
                    i -= 1;
                    j -= 1;
                }
                Move::Left => j -= 1,
                Move::Up => i -= 1,
                Move::None => {
                    return Err(Error::invalid(format!("cell ({i}, {j}) is unreachable")));
                }
            }
        }
        steps.reverse();
        Ok((WarpingPath::new(steps), clipped))
    }
}

/// Closed-start DTW of `query` (columns) against `reference` (rows) with a
/// pluggable frame cost. The normalized cost divides `M(m, n)` by the length
/// of the backtracked path.
pub fn dtw_align<F>(reference: &Sequence, query: &Sequence, mut cost: F) -> Result<Alignment>
where
    F: FnMut(&[f64], &[f64]) -> f64,
{
    if reference.dim() != query.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            got: query.dim(),
        });
    }
    let mut matrix = CostMatrix::new(reference.len(), StartMode::Closed, None)?;
    let mut row_costs = vec![0.0; reference.len()];
    for q in query.frames() {
        for (slot, c) in row_costs.iter_mut().zip(reference.frames()) {
            *slot = cost(c, q);
        }
        matrix.push_column(&row_costs)?;
    }
    let accumulated = matrix.bottom();
    let path = matrix.backtrack(query.len())?;
    Ok(Alignment {
        accumulated,
        normalized: accumulated / path.tau() as f64,
        path,
    })
}

/// [`dtw_align`] with the Euclidean frame cost.
pub fn dtw_align_euclidean(reference: &Sequence, query: &Sequence) -> Result<Alignment> {
    dtw_align(reference, query, euclidean_unchecked)
}
