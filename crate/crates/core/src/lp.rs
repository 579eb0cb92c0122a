//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `maximize c'y  s.t.  G y <= h` with `y` free. Only meant for the
//! small parameter-space LPs of the region oracle (a handful of variables,
//! at most a few hundred rows).

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { y: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        self.pivots += 1;
        let piv = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rhs[r] /= piv;
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let factor = self.rows[i][col];
            if factor != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&prow) {
                    *v -= factor * pv;
                }
                self.rhs[i] -= factor * prhs;
                if self.rhs[i] < 0.0 && self.rhs[i] > -FEAS_TOL {
                    self.rhs[i] = 0.0;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Minimizes `cost' z` over the current basis with Bland's rule.
    /// Columns flagged in `blocked` never enter.
    fn minimize(&mut self, cost: &[f64], blocked: &[bool]) -> Option<bool> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return None;
            }
            let mut entering = None;
            for j in 0..self.ncols {
                if blocked[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j];
                for (i, &bi) in self.basis.iter().enumerate() {
                    reduced -= cost[bi] * self.rows[i][j];
                }
                if reduced < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Some(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
    }
}

/// Maximizes `c'y` subject to `g y <= h`, `y` free. Rows are given as slices.
pub fn maximize(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> LpOutcome {
    let q = c.len();
    let m = g.len();
    assert_eq!(h.len(), m);
    // columns: u (q), v (q), slacks (m), artificials (one per negative rhs)
    let n_art = h.iter().filter(|v| **v < 0.0).count();
    let ncols = 2 * q + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for i in 0..m {
        assert_eq!(g[i].len(), q);
        let mut row = vec![0.0; ncols];
        let sign = if h[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..q {
            row[j] = sign * g[i][j];
            row[q + j] = -sign * g[i][j];
        }
        row[2 * q + i] = sign;
        if h[i] < 0.0 {
            row[2 * q + m + art] = 1.0;
            basis.push(2 * q + m + art);
            art += 1;
        } else {
            basis.push(2 * q + i);
        }
        rows.push(row);
        rhs.push(sign * h[i]);
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis,
        ncols,
        pivots: 0,
    };
    let is_art: Vec<bool> = (0..ncols).map(|j| j >= 2 * q + m).collect();

    if n_art > 0 {
        let cost1: Vec<f64> = (0..ncols).map(|j| if is_art[j] { 1.0 } else { 0.0 }).collect();
        let none = vec![false; ncols];
        if t.minimize(&cost1, &none).is_none() {
            return LpOutcome::IterationLimit;
        }
        let infeas: f64 = t
            .basis
            .iter()
            .zip(&t.rhs)
            .filter(|(b, _)| is_art[**b])
            .map(|(_, v)| *v)
            .sum();
        if infeas > FEAS_TOL * (1.0 + h.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            return LpOutcome::Infeasible;
        }
        // drive remaining (zero-level) artificials out of the basis
        let mut i = 0;
        while i < t.rows.len() {
            if is_art[t.basis[i]] {
                let col = (0..ncols).find(|&j| !is_art[j] && t.rows[i][j].abs() > PIVOT_TOL);
                match col {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.rhs.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut cost2 = vec![0.0; ncols];
    for j in 0..q {
        cost2[j] = -c[j];
        cost2[q + j] = c[j];
    }
    match t.minimize(&cost2, &is_art) {
        None => LpOutcome::IterationLimit,
        Some(false) => LpOutcome::Unbounded,
        Some(true) => {
            let mut z = vec![0.0; ncols];
            for (i, &bi) in t.basis.iter().enumerate() {
                z[bi] = t.rhs[i];
            }
            let y: Vec<f64> = (0..q).map(|j| z[j] - z[q + j]).collect();
            let value = y.iter().zip(c).map(|(a, b)| a * b).sum();
            LpOutcome::Optimal { y, value }
        }
    }
}
