//! Problem and region data shared by the solver and the certifier.
//!
//! The parametric QP is
//!
//! ```text
//!     minimize    1/2 x' H x + (f + F_theta theta)' x
//!     subject to  A x <= b + W theta,        theta in Theta0
//! ```
//!
//! Constraint indices are 0-based in memory. Everything user-facing
//! (working-set printouts, `+j`/`-j` change logs, files) is 1-based.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_err, Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;
/// Half-plane normals shorter than this are treated as constant rows.
pub const NORMAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvexityClass {
    StrictlyConvex,
    SemiDefinite,
    Lp,
}

impl fmt::Display for ConvexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConvexityClass::StrictlyConvex => "strictly_convex",
            ConvexityClass::SemiDefinite => "semi_definite",
            ConvexityClass::Lp => "lp",
        };
        f.write_str(s)
    }
}

/// Affine inequality `c' theta <= d` (or `<` when strict).
#[derive(Clone, Debug, PartialEq)]
pub struct HalfPlane {
    pub c: DVector<f64>,
    pub d: f64,
    pub strict: bool,
}

impl HalfPlane {
    /// Builds the inequality and rescales it to a unit normal.
    pub fn new(c: DVector<f64>, d: f64, strict: bool) -> Self {
        let norm = c.norm();
        // already-unit rows are left untouched so that re-normalizing is bit-stable
        if norm > NORMAL_TOL && (norm - 1.0).abs() > 4.0 * f64::EPSILON {
            HalfPlane {
                c: c / norm,
                d: d / norm,
                strict,
            }
        } else {
            HalfPlane { c, d, strict }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.c.norm() <= NORMAL_TOL
    }

    /// `c' theta - d`; the inequality holds when this is negative (or zero if non-strict).
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.c.dot(theta) - self.d
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        let v = self.value(theta);
        if self.strict {
            v < 0.0
        } else {
            v <= 0.0
        }
    }
}

/// Quadratic inequality `theta' Q theta + R theta + S < 0` (or `<= 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadIneq {
    pub q: DMatrix<f64>,
    pub r: DVector<f64>,
    pub s: f64,
    pub strict: bool,
}

impl QuadIneq {
    pub fn new(q: DMatrix<f64>, r: DVector<f64>, s: f64, strict: bool) -> Self {
        QuadIneq {
            q: symmetrize(&q),
            r,
            s,
            strict,
        }
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        (theta.transpose() * &self.q * theta)[(0, 0)] + self.r.dot(theta) + self.s
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.q * theta * 2.0 + &self.r
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        let v = self.value(theta);
        if self.strict {
            v < 0.0
        } else {
            v <= 0.0
        }
    }
}

/// Conjunction of affine and quadratic parameter inequalities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Region {
    pub linear: Vec<HalfPlane>,
    pub quadratic: Vec<QuadIneq>,
}

impl Region {
    pub fn new(linear: Vec<HalfPlane>, quadratic: Vec<QuadIneq>) -> Self {
        Region { linear, quadratic }
    }

    /// Axis-aligned box `lo <= theta <= hi`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len());
        let p = lo.len();
        let mut linear = Vec::with_capacity(2 * p);
        for i in 0..p {
            linear.push(HalfPlane::new(-DVector::from_fn(p, |k, _| f64::from(k == i)), -lo[i], false));
            linear.push(HalfPlane::new(DVector::from_fn(p, |k, _| f64::from(k == i)), hi[i], false));
        }
        Region::new(linear, Vec::new())
    }

    pub fn is_polyhedral(&self) -> bool {
        self.quadratic.is_empty()
    }

    /// Checks that every stored inequality lives in `R^p`.
    pub fn check_dim(&self, p: usize) -> Result<()> {
        for h in &self.linear {
            if h.c.len() != p {
                return Err(dim_err("half-plane normal", p, h.c.len()));
            }
        }
        for q in &self.quadratic {
            if q.q.nrows() != p || q.q.ncols() != p || q.r.len() != p {
                return Err(dim_err("quadratic inequality", p, q.r.len()));
            }
        }
        Ok(())
    }

    /// Membership with every inequality's strictness honored.
    pub fn contains(&self, theta: &DVector<f64>) -> Result<bool> {
        self.check_dim(theta.len())?;
        Ok(self.contains_unchecked(theta))
    }

    pub(crate) fn contains_unchecked(&self, theta: &DVector<f64>) -> bool {
        self.linear.iter().all(|h| h.contains(theta)) && self.quadratic.iter().all(|q| q.contains(theta))
    }

    /// Membership in the closure, up to `tol` (scaled by the gradient norm for quadratics).
    pub fn contains_closure(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.linear.iter().all(|h| h.value(theta) <= tol)
            && self
                .quadratic
                .iter()
                .all(|q| q.value(theta) <= tol * q.gradient(theta).norm().max(1.0))
    }

    /// Smallest distance-like margin from `theta` to any of the region's boundaries.
    pub fn boundary_distance(&self, theta: &DVector<f64>) -> f64 {
        let lin = self
            .linear
            .iter()
            .filter(|h| !h.is_constant())
            .map(|h| h.value(theta).abs());
        let quad = self.quadratic.iter().map(|q| {
            let g = q.gradient(theta).norm();
            q.value(theta).abs() / g.max(1e-300)
        });
        lin.chain(quad).fold(f64::INFINITY, f64::min)
    }

    pub fn intersect(&self, linear: Vec<HalfPlane>, quadratic: Vec<QuadIneq>) -> Region {
        let mut out = self.clone();
        out.linear.extend(linear);
        out.quadratic.extend(quadratic);
        out
    }

    pub fn linear_part(&self) -> Region {
        Region::new(self.linear.clone(), Vec::new())
    }
}

/// Ordered set of constraint indices treated as equalities.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorkingSet {
    indices: Vec<usize>,
}

impl WorkingSet {
    pub fn empty() -> Self {
        WorkingSet::default()
    }

    /// From 0-based indices; duplicates are rejected.
    pub fn from_indices(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("duplicate working-set index in {indices:?}")));
        }
        Ok(WorkingSet { indices })
    }

    /// From 1-based indices as written in files and on the command line.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i == 0) {
            return Err(Error::Invalid("constraint indices are 1-based".into()));
        }
        WorkingSet::from_indices(indices.iter().map(|i| i - 1).collect())
    }

    pub fn all(m: usize) -> Self {
        WorkingSet {
            indices: (0..m).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.indices.binary_search(&i).ok()
    }

    /// `K \ W` in ascending order.
    pub fn complement(&self, m: usize) -> Vec<usize> {
        (0..m).filter(|i| !self.contains(*i)).collect()
    }

    pub fn with(&self, i: usize) -> WorkingSet {
        let mut out = self.clone();
        if let Err(pos) = out.indices.binary_search(&i) {
            out.indices.insert(pos, i);
        }
        out
    }

    pub fn without(&self, i: usize) -> WorkingSet {
        let mut out = self.clone();
        if let Ok(pos) = out.indices.binary_search(&i) {
            out.indices.remove(pos);
        }
        out
    }

    /// Rows of `mat` selected by the working set.
    pub fn rows(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        mat.select_rows(self.indices.iter())
    }

    pub fn entries(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|&i| v[i]))
    }
}

impl fmt::Display for WorkingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.indices.is_empty() {
            return f.write_str("∅");
        }
        let parts: Vec<String> = self.indices.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// One working-set change; the payload is the 0-based constraint index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WsChange {
    Add(usize),
    Remove(usize),
}

impl WsChange {
    /// Signed 1-based code: `+j` for additions, `-j` for removals.
    pub fn code(self) -> i64 {
        match self {
            WsChange::Add(i) => i as i64 + 1,
            WsChange::Remove(i) => -(i as i64 + 1),
        }
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            0 => Err(Error::Invalid("working-set change code 0".into())),
            c if c > 0 => Ok(WsChange::Add(c as usize - 1)),
            c => Ok(WsChange::Remove((-c) as usize - 1)),
        }
    }

    pub fn apply(self, ws: &WorkingSet) -> WorkingSet {
        match self {
            WsChange::Add(i) => ws.with(i),
            WsChange::Remove(i) => ws.without(i),
        }
    }
}

impl fmt::Display for WsChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.code())
    }
}

/// Replays a change log and renders it as `∅ -> {1} -> {1,3} -> {3}`.
pub fn format_sequence(w0: &WorkingSet, changes: &[WsChange]) -> String {
    let mut ws = w0.clone();
    let mut parts = vec![ws.to_string()];
    for c in changes {
        ws = c.apply(&ws);
        parts.push(ws.to_string());
    }
    parts.join(" -> ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    InProgress,
    Csp,
    Optimal,
    Unbounded,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::InProgress => 0,
            Status::Csp => 1,
            Status::Optimal => 2,
            Status::Unbounded => 3,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Optimal | Status::Unbounded)
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::InProgress => "in_progress",
            Status::Csp => "csp",
            Status::Optimal => "optimal",
            Status::Unbounded => "unbounded",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "in_progress" => Some(Status::InProgress),
            "csp" => Some(Status::Csp),
            "optimal" => Some(Status::Optimal),
            "unbounded" => Some(Status::Unbounded),
            _ => None,
        }
    }
}

/// `x = F theta + G`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl AffineMap {
    pub fn new(f: DMatrix<f64>, g: DVector<f64>) -> Self {
        AffineMap { f, g }
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        AffineMap {
            f: DMatrix::zeros(n, p),
            g: DVector::zeros(n),
        }
    }

    pub fn eval(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.f * theta + &self.g
    }
}

/// Certification work item: a parameter region together with the solver state
/// every parameter in it shares.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionTuple {
    pub theta: Region,
    pub ws: WorkingSet,
    /// Affine iterate `x_k = F theta + G`; absent while iterates are not affine.
    pub affine: Option<AffineMap>,
    pub status: Status,
    /// Number of solver iterations (while-loop passes) the region has gone through.
    pub k: usize,
    /// Latest removed constraint; its row of `A` is the direction anchor `n_hat`.
    pub last_removed: Option<usize>,
    /// True while no constraint has been removed since the start.
    pub case2: bool,
    pub wschanges: Vec<WsChange>,
    pub flops: u64,
}

impl RegionTuple {
    pub fn nhat(&self, mp: &MpQp) -> Option<DVector<f64>> {
        self.last_removed.map(|l| mp.a.row(l).transpose())
    }

    pub fn change_codes(&self) -> Vec<i64> {
        self.wschanges.iter().map(|c| c.code()).collect()
    }
}

/// Final certified partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub regions: Vec<RegionTuple>,
    pub meta: PartitionMeta,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartitionMeta {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub problem_hash: String,
    pub options: Vec<(String, String)>,
    pub theta0: Region,
    pub w0: WorkingSet,
    /// Seconds; kept in memory and on the summary line but not serialized.
    pub wall_time: f64,
}

impl Partition {
    /// Worst-case iteration count over all regions.
    pub fn n_max(&self) -> usize {
        self.regions.iter().map(|r| r.k).max().unwrap_or(0)
    }

    pub fn n_reg(&self) -> usize {
        self.regions.len()
    }

    pub fn max_flops(&self) -> u64 {
        self.regions.iter().map(|r| r.flops).max().unwrap_or(0)
    }

    /// Index of the first region whose interior contains `theta`.
    pub fn locate(&self, theta: &DVector<f64>) -> Option<usize> {
        self.regions.iter().position(|r| r.theta.contains_unchecked(theta))
    }
}

/// Parametric QP data.
#[derive(Clone, Debug, PartialEq)]
pub struct MpQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub f_theta: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w: DMatrix<f64>,
    pub theta0: Region,
    pub convexity_class: ConvexityClass,
}

impl MpQp {
    /// Symmetrizes `H`, checks every invariant and classifies convexity.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        f_theta: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        w: DMatrix<f64>,
        theta0: Region,
    ) -> Result<Self> {
        let mut mp = MpQp {
            h,
            f,
            f_theta,
            a,
            b,
            w,
            theta0,
            convexity_class: ConvexityClass::StrictlyConvex,
        };
        let diags = validate(&mp);
        if let Some(d) = diags.first() {
            return Err(match d {
                Diagnostic::Dimension { field, expected, got } => dim_err(field, expected, got),
                other => Error::Invalid(other.to_string()),
            });
        }
        mp.h = symmetrize(&mp.h);
        mp.convexity_class = classify(&mp.h);
        Ok(mp)
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    pub fn f_of(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.f + &self.f_theta * theta
    }

    pub fn b_of(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b + &self.w * theta
    }

    /// Primal slack `b(theta) - A x`.
    pub fn slack(&self, theta: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.b_of(theta) - &self.a * x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    Dimension {
        field: String,
        expected: String,
        got: String,
    },
    NotSymmetric(f64),
    NotPsd(f64),
    NonFinite(String),
    QuadraticTheta0,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Dimension { field, expected, got } => {
                write!(f, "dimension mismatch in {field}: expected {expected}, got {got}")
            }
            Diagnostic::NotSymmetric(e) => write!(f, "H not symmetric (|H - H'|_inf = {e:e})"),
            Diagnostic::NotPsd(e) => write!(f, "H not PSD (min eigenvalue {e:e})"),
            Diagnostic::NonFinite(field) => write!(f, "non-finite entry in {field}"),
            Diagnostic::QuadraticTheta0 => f.write_str("theta0 must be polyhedral"),
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Classifies `H` from its spectrum; assumes it is (numerically) symmetric.
pub fn classify(h: &DMatrix<f64>) -> ConvexityClass {
    if h.iter().all(|v| *v == 0.0) {
        return ConvexityClass::Lp;
    }
    let min_eig = min_eigenvalue(h);
    if min_eig >= PSD_TOL {
        ConvexityClass::StrictlyConvex
    } else {
        ConvexityClass::SemiDefinite
    }
}

pub(crate) fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(h)).eigenvalues.min()
}

/// Checks the data invariants. Empty output means the problem is well formed.
pub fn validate(mp: &MpQp) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = mp.h.nrows();
    let m = mp.a.nrows();
    let p = mp.w.ncols();
    let mut dim = |field: &str, expected: String, got: String| {
        if expected != got {
            out.push(Diagnostic::Dimension {
                field: field.into(),
                expected,
                got,
            });
        }
    };
    dim("H", format!("{n}x{n}"), format!("{}x{}", mp.h.nrows(), mp.h.ncols()));
    dim("f", n.to_string(), mp.f.len().to_string());
    dim(
        "f_theta",
        format!("{n}x{p}"),
        format!("{}x{}", mp.f_theta.nrows(), mp.f_theta.ncols()),
    );
    dim("A", format!("{m}x{n}"), format!("{}x{}", mp.a.nrows(), mp.a.ncols()));
    dim("b", m.to_string(), mp.b.len().to_string());
    dim("W", format!("{m}x{p}"), format!("{}x{}", mp.w.nrows(), mp.w.ncols()));
    if mp.theta0.check_dim(p).is_err() {
        out.push(Diagnostic::Dimension {
            field: "theta0".into(),
            expected: p.to_string(),
            got: "mismatched row".into(),
        });
    }
    if !out.is_empty() {
        return out;
    }
    for (name, ok) in [
        ("H", mp.h.iter().all(|v| v.is_finite())),
        ("f", mp.f.iter().all(|v| v.is_finite())),
        ("f_theta", mp.f_theta.iter().all(|v| v.is_finite())),
        ("A", mp.a.iter().all(|v| v.is_finite())),
        ("b", mp.b.iter().all(|v| v.is_finite())),
        ("W", mp.w.iter().all(|v| v.is_finite())),
    ] {
        if !ok {
            out.push(Diagnostic::NonFinite(name.into()));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let asym = (&mp.h - mp.h.transpose()).abs().max();
    if asym > SYMMETRY_TOL * mp.h.abs().max().max(1.0) {
        out.push(Diagnostic::NotSymmetric(asym));
    }
    let min_eig = min_eigenvalue(&mp.h);
    if min_eig < -PSD_TOL {
        out.push(Diagnostic::NotPsd(min_eig));
    }
    if !mp.theta0.quadratic.is_empty() {
        out.push(Diagnostic::QuadraticTheta0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn empty_region_contains_everything() {
        let r = Region::default();
        assert!(r.contains(&v(&[])).unwrap());
        assert!(r.contains_unchecked(&v(&[1e9, -3.0])));
    }

    #[test]
    fn strict_half_plane_excludes_boundary() {
        let r = Region::new(vec![HalfPlane::new(v(&[1.0, 0.0]), 0.5, true)], vec![]);
        assert!(!r.contains(&v(&[0.5, 0.0])).unwrap());
        assert!(r.contains(&v(&[0.49, 0.0])).unwrap());
    }

    #[test]
    fn non_strict_quadratic_includes_boundary() {
        let q = QuadIneq::new(DMatrix::identity(2, 2), v(&[0.0, 0.0]), -1.0, false);
        let r = Region::new(vec![], vec![q]);
        assert!(r.contains(&v(&[1.0, 0.0])).unwrap());
        assert!(!r.contains(&v(&[1.0, 0.1])).unwrap());
    }

    #[test]
    fn membership_rejects_wrong_dimension() {
        let r = Region::new(vec![HalfPlane::new(v(&[1.0, 0.0]), 0.5, true)], vec![]);
        assert!(matches!(r.contains(&v(&[0.1])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn constant_half_planes() {
        assert!(HalfPlane::new(v(&[0.0]), 0.0, false).contains(&v(&[3.0])));
        assert!(!HalfPlane::new(v(&[0.0]), 0.0, true).contains(&v(&[3.0])));
        assert!(!HalfPlane::new(v(&[0.0]), -1.0, false).contains(&v(&[3.0])));
    }

    #[test]
    fn normalization_is_bit_stable() {
        let h = HalfPlane::new(v(&[3.0, 4.0]), 10.0, false);
        assert!((h.c.norm() - 1.0).abs() < 1e-15);
        assert_eq!(h.d, 2.0);
        let again = HalfPlane::new(h.c.clone(), h.d, h.strict);
        assert_eq!(again, h);
    }

    #[test]
    fn working_set_bookkeeping() {
        let ws = WorkingSet::from_one_based(&[3, 1]).unwrap();
        assert_eq!(ws.indices(), &[0, 2]);
        assert_eq!(ws.complement(4), vec![1, 3]);
        assert_eq!(ws.to_string(), "{1,3}");
        assert_eq!(WorkingSet::empty().to_string(), "∅");
        assert!(WorkingSet::from_indices(vec![1, 1]).is_err());
        assert_eq!(ws.without(0).with(1).indices(), &[1, 2]);
    }

    #[test]
    fn sequence_rendering() {
        let changes = [WsChange::Add(0), WsChange::Add(2), WsChange::Remove(0)];
        assert_eq!(
            format_sequence(&WorkingSet::empty(), &changes),
            "∅ -> {1} -> {1,3} -> {3}"
        );
        assert_eq!(WsChange::from_code(-3).unwrap(), WsChange::Remove(2));
        assert_eq!(WsChange::Add(4).to_string(), "+5");
    }

    fn parts(h: DMatrix<f64>) -> MpQp {
        let n = h.nrows();
        MpQp {
            h,
            f: DVector::zeros(n),
            f_theta: DMatrix::zeros(n, 1),
            a: DMatrix::zeros(1, n),
            b: DVector::zeros(1),
            w: DMatrix::zeros(1, 1),
            theta0: Region::default(),
            convexity_class: ConvexityClass::StrictlyConvex,
        }
    }

    #[test]
    fn zero_hessian_is_lp() {
        let mp = parts(DMatrix::zeros(2, 2));
        assert!(validate(&mp).is_empty());
        assert_eq!(classify(&mp.h), ConvexityClass::Lp);
    }

    #[test]
    fn indefinite_hessian_is_reported() {
        let mp = parts(DMatrix::from_diagonal(&v(&[1.0, -1.0])));
        let d = validate(&mp);
        assert_eq!(d.len(), 1);
        assert!(d[0].to_string().contains("H not PSD"));
    }

    #[test]
    fn dimension_mismatch_is_reported_per_field() {
        let mut mp = parts(DMatrix::identity(2, 2));
        mp.f = DVector::zeros(3);
        mp.b = DVector::zeros(2);
        let d = validate(&mp);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|x| matches!(x, Diagnostic::Dimension { .. })));
    }

    #[test]
    fn symmetrization_is_idempotent() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0 + 1e-12, 1.0, 3.0]);
        let once = symmetrize(&h);
        assert_eq!(symmetrize(&once), once);
    }
}
