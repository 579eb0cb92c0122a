//! Shared fixtures and independent reference computations for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ascert::io::{parse_problem, ProblemFile};
use ascert::model::{MpQp, Region};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> ProblemFile {
    parse_problem(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn contrived() -> ProblemFile {
    load("contrived.qp")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(lo..hi))
}

/// Strictly convex mpQP on the unit box with `x = 0` feasible for every parameter.
pub fn random_mpqp(r: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> MpQp {
    let l = uniform(r, n, n, -1.0, 1.0);
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
    let w = uniform(r, m, p, -1.0, 1.0);
    let b = DVector::from_fn(m, |i, _| w.row(i).iter().map(|v| v.abs()).sum::<f64>() + r.gen_range(0.2..2.0));
    MpQp::new(
        h,
        DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)),
        uniform(r, n, p, -8.0, 8.0),
        uniform(r, m, n, -1.0, 1.0),
        b,
        w,
        Region::boxed(&vec![0.0; p], &vec![1.0; p]),
    )
    .unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexEnd {
    Optimal,
    Unbounded,
}

/// Dantzig-rule simplex on `min c'x s.t. A x <= b` moving between vertices.
/// The basis is the list of tight rows; the leaving row has the most negative
/// multiplier and the entering row wins the ratio test, ties to the lowest index.
/// Returns the signed 1-based changes (`-l`, `+i`, ...).
pub fn dantzig_simplex(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, basis: &[usize]) -> (Vec<i64>, SimplexEnd) {
    let n = c.len();
    let mut basis: Vec<usize> = basis.to_vec();
    let mut changes = Vec::new();
    for _ in 0..100 {
        basis.sort_unstable();
        let ab = DMatrix::from_fn(n, n, |i, j| a[(basis[i], j)]);
        let bb = DVector::from_fn(n, |i, _| b[basis[i]]);
        let lu = ab.clone().lu();
        let x = lu.solve(&bb).expect("nonsingular basis");
        // c + A_B' lam = 0
        let lam = ab.transpose().lu().solve(&(-c)).expect("nonsingular basis");
        let mut leave: Option<usize> = None;
        for pos in 0..n {
            if lam[pos] < 0.0 && leave.map_or(true, |q| lam[pos] < lam[q]) {
                leave = Some(pos);
            }
        }
        let Some(pos) = leave else {
            return (changes, SimplexEnd::Optimal);
        };
        // edge direction: leave row `pos`, keep the others tight
        let mut e = DVector::zeros(n);
        e[pos] = -1.0;
        let d = lu.solve(&e).unwrap();
        changes.push(-(basis[pos] as i64 + 1));
        let out = basis.remove(pos);
        let mut enter: Option<(usize, f64)> = None;
        for i in 0..a.nrows() {
            if basis.contains(&i) || i == out {
                continue;
            }
            let rate = a.row(i).dot(&d.transpose());
            if rate > 1e-12 {
                let t = (b[i] - a.row(i).dot(&x.transpose())) / rate;
                if enter.map_or(true, |(_, best)| t < best) {
                    enter = Some((i, t));
                }
            }
        }
        match enter {
            None => return (changes, SimplexEnd::Unbounded),
            Some((i, _)) => {
                changes.push(i as i64 + 1);
                basis.push(i);
            }
        }
    }
    panic!("simplex did not terminate");
}

/// Random LP `min (c + c_theta theta)'x` over `x >= 0` and extra rows with
/// positive right-hand sides, started at the vertex `x = 0`.
pub fn random_lp(r: &mut ChaCha8Rng, n: usize, m_extra: usize) -> MpQp {
    let m = n + m_extra;
    let mut a = DMatrix::zeros(m, n);
    for i in 0..n {
        a[(i, i)] = -1.0;
    }
    for i in n..m {
        for j in 0..n {
            a[(i, j)] = r.gen_range(-1.0..1.0);
        }
    }
    let b = DVector::from_fn(m, |i, _| if i < n { 0.0 } else { r.gen_range(0.5..2.0) });
    MpQp::new(
        DMatrix::zeros(n, n),
        DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)),
        uniform(r, n, 1, -1.0, 1.0),
        a,
        b,
        DMatrix::zeros(m, 1),
        Region::boxed(&[0.0], &[1.0]),
    )
    .unwrap()
}

pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}
