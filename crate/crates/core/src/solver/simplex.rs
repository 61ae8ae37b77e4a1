//! Dense two-phase tableau simplex for small linear programs.
//!
//! Used by the enumeration oracle. It favours simplicity over speed: every
//! bound is turned into a row and the full tableau is kept in memory.

use crate::error::{Error, Result};
use crate::milp::RowSense;

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 50;

/// Sparse terms, sense and right-hand side of one row.
pub type LpRow = (Vec<(usize, f64)>, RowSense, f64);

/// `min c·x` subject to sparse rows and variable bounds. Lower bounds may be
/// `-inf`; upper bounds may be `+inf`.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

// How an original variable maps onto non-negative tableau columns.
#[derive(Clone, Copy)]
enum Map {
    Shift { col: usize, lower: f64 },
    Mirror { col: usize, upper: f64 },
    Split { pos: usize, neg: usize },
    Fixed(f64),
}

struct Tableau {
    m: usize,
    width: usize,
    // m constraint rows followed by one reduced-cost row.
    data: Vec<f64>,
    basis: Vec<usize>,
    basic: Vec<bool>,
    // Columns of the starting identity basis, for the lexicographic ratio test.
    origin: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    /// Row `i` precedes row `k` in the lexicographic order of their
    /// starting-basis entries scaled by the pivot column.
    fn lex_less(&self, i: usize, k: usize, col: usize) -> bool {
        let (ai, ak) = (self.at(i, col), self.at(k, col));
        for &j in &self.origin {
            let (vi, vk) = (self.at(i, j) / ai, self.at(k, j) / ak);
            if vi < vk - 1e-12 {
                return true;
            }
            if vi > vk + 1e-12 {
                return false;
            }
        }
        false
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.data[r * w + c];
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        self.data[r * w + c] = 1.0;
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for block in [before, after] {
            for row in block.chunks_mut(w) {
                let f = row[c];
                if f != 0.0 {
                    for (x, &pj) in row.iter_mut().zip(prow.iter()) {
                        *x -= f * pj;
                    }
                    row[c] = 0.0;
                }
            }
        }
        self.basic[self.basis[r]] = false;
        self.basic[c] = true;
        self.basis[r] = c;
    }

    /// Minimises `cost` over the current basis. `allowed` marks columns that
    /// may enter. Returns false when unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool> {
        let n = self.width - 1;
        let w = self.width;
        let obj = self.m * w;
        for j in 0..w {
            let mut d = if j < n { cost[j] } else { 0.0 };
            for i in 0..self.m {
                let a = self.at(i, j);
                if a != 0.0 {
                    d -= cost[self.basis[i]] * a;
                }
            }
            self.data[obj + j] = d;
        }
        let mut degenerate = 0usize;
        let mut bland = false;
        let limit = 100 * (self.m + self.width);
        for _ in 0..limit {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if !allowed[j] || self.basic[j] {
                    continue;
                }
                let d = self.data[obj + j];
                if d < -PIVOT_TOL {
                    if bland {
                        best = Some((j, d));
                        break;
                    }
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
            }
            let Some((col, _)) = best else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    let replace = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12
                                    && if bland {
                                        self.basis[i] < self.basis[li]
                                    } else {
                                        self.lex_less(i, li, col)
                                    })
                        }
                    };
                    if replace {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Ok(false);
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
        Err(Error::Solver(format!("simplex stalled after {limit} pivots")))
    }
}

/// Solves `problem` with a two-phase simplex.
pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome> {
    let n = problem.cost.len();
    if problem.lower.len() != n || problem.upper.len() != n {
        return Err(Error::Solver("bound vectors do not match the cost vector".into()));
    }
    // Column mapping.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (problem.lower[j], problem.upper[j]);
        if lo > hi {
            return Ok(LpOutcome::Infeasible);
        }
        let map = if lo == hi {
            Map::Fixed(lo)
        } else if lo.is_finite() {
            let col = ncols;
            ncols += 1;
            if hi.is_finite() {
                bound_rows.push((col, hi - lo));
            }
            Map::Shift { col, lower: lo }
        } else if hi.is_finite() {
            let col = ncols;
            ncols += 1;
            Map::Mirror { col, upper: hi }
        } else {
            let pos = ncols;
            ncols += 2;
            Map::Split { pos, neg: pos + 1 }
        };
        maps.push(map);
    }

    // Rows over tableau columns with non-negative right-hand sides.
    let mut rows: Vec<LpRow> = Vec::new();
    for (terms, sense, rhs) in &problem.rows {
        let mut b = *rhs;
        let mut out: Vec<(usize, f64)> = Vec::new();
        for &(j, a) in terms {
            match maps[j] {
                Map::Fixed(v) => b -= a * v,
                Map::Shift { col, lower } => {
                    b -= a * lower;
                    out.push((col, a));
                }
                Map::Mirror { col, upper } => {
                    b -= a * upper;
                    out.push((col, -a));
                }
                Map::Split { pos, neg } => {
                    out.push((pos, a));
                    out.push((neg, -a));
                }
            }
        }
        rows.push((out, *sense, b));
    }
    for (col, ub) in bound_rows {
        rows.push((vec![(col, 1.0)], RowSense::Le, ub));
    }
    for row in &mut rows {
        if row.2 < 0.0 {
            row.2 = -row.2;
            for t in &mut row.0 {
                t.1 = -t.1;
            }
            row.1 = match row.1 {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }

    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != RowSense::Le).count();
    let total = ncols + slacks + artificials;
    let width = total + 1;
    let mut tab = Tableau {
        m,
        width,
        data: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
        basic: vec![false; total],
        origin: Vec::new(),
    };
    let mut next_slack = ncols;
    let mut next_art = ncols + slacks;
    for (i, (terms, sense, b)) in rows.iter().enumerate() {
        for &(c, a) in terms {
            tab.data[i * width + c] += a;
        }
        tab.data[i * width + total] = *b;
        match sense {
            RowSense::Le => {
                tab.data[i * width + next_slack] = 1.0;
                tab.basis[i] = next_slack;
                next_slack += 1;
            }
            RowSense::Ge => {
                tab.data[i * width + next_slack] = -1.0;
                next_slack += 1;
                tab.data[i * width + next_art] = 1.0;
                tab.basis[i] = next_art;
                next_art += 1;
            }
            RowSense::Eq => {
                tab.data[i * width + next_art] = 1.0;
                tab.basis[i] = next_art;
                next_art += 1;
            }
        }
    }

    for &b in &tab.basis {
        tab.basic[b] = true;
    }
    tab.origin = tab.basis.clone();
    let is_art = |j: usize| j >= ncols + slacks;
    if artificials > 0 {
        let mut phase1 = vec![0.0; total];
        for (j, c) in phase1.iter_mut().enumerate() {
            if is_art(j) {
                *c = 1.0;
            }
        }
        let allowed = vec![true; total];
        tab.optimise(&phase1, &allowed)?;
        let infeas: f64 = (0..m).filter(|&i| is_art(tab.basis[i])).map(|i| tab.rhs(i)).sum();
        let scale = rows.iter().map(|r| r.2.abs()).fold(1.0, f64::max);
        if infeas > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining zero-level artificials out of the basis.
        for i in 0..m {
            if is_art(tab.basis[i]) {
                if let Some(j) = (0..ncols + slacks).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut phase2 = vec![0.0; total];
    for (j, map) in maps.iter().enumerate() {
        let c = problem.cost[j];
        match *map {
            Map::Shift { col, .. } => phase2[col] += c,
            Map::Mirror { col, .. } => phase2[col] -= c,
            Map::Split { pos, neg } => {
                phase2[pos] += c;
                phase2[neg] -= c;
            }
            Map::Fixed(_) => {}
        }
    }
    let allowed: Vec<bool> = (0..total).map(|j| !is_art(j)).collect();
    if !tab.optimise(&phase2, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut y = vec![0.0; total];
    for i in 0..m {
        y[tab.basis[i]] = tab.rhs(i);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            Map::Fixed(v) => v,
            Map::Shift { col, lower } => lower + y[col],
            Map::Mirror { col, upper } => upper - y[col],
            Map::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = x.iter().zip(&problem.cost).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, objective })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn lp(cost: Vec<f64>, rows: Vec<LpRow>, lower: Vec<f64>, upper: Vec<f64>) -> LpProblem {
        LpProblem { cost, rows, lower, upper }
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let p = lp(
            vec![-3.0, -5.0],
            vec![
                (vec![(0, 1.0)], RowSense::Le, 4.0),
                (vec![(1, 2.0)], RowSense::Le, 12.0),
                (vec![(0, 3.0), (1, 2.0)], RowSense::Le, 18.0),
            ],
            vec![0.0, 0.0],
            vec![f64::INFINITY; 2],
        );
        match solve_lp(&p).unwrap() {
            LpOutcome::Optimal { x, objective } => {
                assert_abs_diff_eq!(objective, -36.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-9);
                assert_abs_diff_eq!(x[1], 6.0, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y s.t. x + y = 3, x - y >= 1, y >= 0.5
        let p = lp(
            vec![1.0, 2.0],
            vec![
                (vec![(0, 1.0), (1, 1.0)], RowSense::Eq, 3.0),
                (vec![(0, 1.0), (1, -1.0)], RowSense::Ge, 1.0),
            ],
            vec![0.0, 0.5],
            vec![f64::INFINITY, f64::INFINITY],
        );
        match solve_lp(&p).unwrap() {
            LpOutcome::Optimal { x, objective } => {
                assert_abs_diff_eq!(objective, 3.5, epsilon = 1e-9);
                assert_abs_diff_eq!(x[1], 0.5, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let inf = lp(
            vec![1.0],
            vec![(vec![(0, 1.0)], RowSense::Ge, 2.0), (vec![(0, 1.0)], RowSense::Le, 1.0)],
            vec![0.0],
            vec![f64::INFINITY],
        );
        assert_eq!(solve_lp(&inf).unwrap(), LpOutcome::Infeasible);
        let unb = lp(vec![-1.0], vec![], vec![0.0], vec![f64::INFINITY]);
        assert_eq!(solve_lp(&unb).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x - y with x free, x >= -2 via row, y <= 3 and unbounded below, x + y >= -10
        let p = lp(
            vec![1.0, -1.0],
            vec![
                (vec![(0, 1.0)], RowSense::Ge, -2.0),
                (vec![(0, 1.0), (1, 1.0)], RowSense::Ge, -10.0),
            ],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![f64::INFINITY, 3.0],
        );
        match solve_lp(&p).unwrap() {
            LpOutcome::Optimal { objective, .. } => assert_abs_diff_eq!(objective, -5.0, epsilon = 1e-9),
            other => panic!("{other:?}"),
        }
    }
}
