//! Null-space factorization of the equality-constrained subproblem
//!
//! ```text
//!     [ H   A_k' ] [ x ]   [ -f(theta) ]
//!     [ A_k  0   ] [ l ] = [  b_k(theta) ]
//! ```
//!
//! With `A_k' = [Q1 Q2] [R1; 0]`, `Z = Q2` spans the null space of `A_k` and
//! `Y = Q1 R1^{-T}` satisfies `A_k Y = I`. The solution maps are built from
//!
//! ```text
//!     H* = Z (Z'HZ)^{-1} Z',   T = Y - H* H Y,   U = Y'H H* H Y - Y'H Y.
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{MpQp, WorkingSet};

pub const DEFAULT_EPS_SING: f64 = 1e-9;
/// Relative threshold on `|R1_ii|` below which the active rows count as dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct KktFactors {
    pub ws: WorkingSet,
    pub z: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Cholesky of `Z'HZ`; `None` when the reduced Hessian is singular.
    reduced: Option<Cholesky<f64, Dyn>>,
    pub singular: bool,
    /// Smallest eigenvalue of the reduced Hessian (`+inf` when `Z` is empty).
    pub reduced_min_eig: f64,
    /// Cached `T`; present whenever the factorization is nonsingular.
    pub t: Option<DMatrix<f64>>,
}

/// Affine parametric CSP and multiplier maps for one working set.
#[derive(Clone, Debug, PartialEq)]
pub struct EqpSolution {
    pub fstar: DMatrix<f64>,
    pub gstar: DVector<f64>,
    pub flam: DMatrix<f64>,
    pub glam: DVector<f64>,
}

impl EqpSolution {
    pub fn x(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.fstar * theta + &self.gstar
    }

    pub fn lam(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.flam * theta + &self.glam
    }
}

/// Factorizes the KKT system of working set `ws`.
pub fn factorize(h: &DMatrix<f64>, a: &DMatrix<f64>, ws: &WorkingSet, eps_sing: f64) -> Result<KktFactors> {
    let n = h.nrows();
    let r = ws.len();
    if r > n {
        return Err(Error::DegenerateWorkingSet(ws.to_string()));
    }
    let ak = ws.rows(a);
    // pad to a square matrix so the QR yields the full orthogonal factor
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (n, r)).copy_from(&ak.transpose());
    let qr = padded.qr();
    let q = qr.q();
    let rmat = qr.r();
    let r1 = rmat.view((0, 0), (r, r)).into_owned();
    let scale = ak.abs().max().max(f64::MIN_POSITIVE);
    for i in 0..r {
        if r1[(i, i)].abs() <= RANK_TOL * scale {
            return Err(Error::DegenerateWorkingSet(ws.to_string()));
        }
    }
    let q1 = q.columns(0, r).into_owned();
    let z = q.columns(r, n - r).into_owned();
    // Y' = R1^{-1} Q1'
    let yt = r1
        .solve_upper_triangular(&q1.transpose())
        .ok_or_else(|| Error::DegenerateWorkingSet(ws.to_string()))?;
    let y = yt.transpose();

    let hr = z.transpose() * h * &z;
    let hr = (&hr + hr.transpose()) * 0.5;
    let (singular, min_eig) = if n == r {
        (false, f64::INFINITY)
    } else {
        let eig = SymmetricEigen::new(hr.clone()).eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        (lo <= eps_sing * hi.max(f64::MIN_POSITIVE), lo)
    };
    let reduced = if singular { None } else { Cholesky::new(hr) };
    if !singular && reduced.is_none() && n > r {
        return Err(Error::SingularReducedHessian(ws.to_string()));
    }
    let mut f = KktFactors {
        ws: ws.clone(),
        z,
        y,
        reduced,
        singular,
        reduced_min_eig: min_eig,
        t: None,
    };
    if !singular {
        let hy = h * &f.y;
        let t = &f.y - f.hstar_apply_mat(&hy)?;
        f.t = Some(t);
    }
    Ok(f)
}

impl KktFactors {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// `H* v` without forming `H*`.
    pub fn hstar_apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if self.singular {
            return Err(Error::SingularReducedHessian(self.ws.to_string()));
        }
        if self.z.ncols() == 0 {
            return Ok(DVector::zeros(self.n()));
        }
        let chol = self.reduced.as_ref().expect("nonsingular factorization");
        let w = self.z.transpose() * v;
        Ok(&self.z * chol.solve(&w))
    }

    pub fn hstar_apply_mat(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.singular {
            return Err(Error::SingularReducedHessian(self.ws.to_string()));
        }
        if self.z.ncols() == 0 {
            return Ok(DMatrix::zeros(self.n(), v.ncols()));
        }
        let chol = self.reduced.as_ref().expect("nonsingular factorization");
        let w = self.z.transpose() * v;
        Ok(&self.z * chol.solve(&w))
    }

    /// Dense `H*`; the certifier needs it inside matrix products.
    pub fn hstar(&self) -> Result<DMatrix<f64>> {
        self.hstar_apply_mat(&DMatrix::identity(self.n(), self.n()))
    }

    pub fn t(&self) -> Result<&DMatrix<f64>> {
        self.t
            .as_ref()
            .ok_or_else(|| Error::SingularReducedHessian(self.ws.to_string()))
    }

    /// `U = Y'H H* H Y - Y'H Y`.
    pub fn u(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let hy = h * &self.y;
        let hs_hy = self.hstar_apply_mat(&hy)?;
        Ok(hy.transpose() * hs_hy - self.y.transpose() * hy)
    }

    /// Least-squares multipliers for stationarity residual `g`: `lambda = -Y' g`.
    /// Exact whenever `g` lies in the range of `A_k'`.
    pub fn multipliers(&self, g: &DVector<f64>) -> DVector<f64> {
        -(self.y.transpose() * g)
    }

    /// Projected steepest descent `-Z Z' g`, the gradient step for LPs.
    pub fn projected_gradient(&self, g: &DVector<f64>) -> DVector<f64> {
        -(&self.z * (self.z.transpose() * g))
    }
}

/// Affine maps of the CSP and its multipliers over `theta`.
pub fn parametric_eqp(mp: &MpQp, factors: &KktFactors) -> Result<EqpSolution> {
    let ws = &factors.ws;
    let t = factors.t()?;
    let u = factors.u(&mp.h)?;
    let wk = ws.rows(&mp.w);
    let bk = ws.entries(&mp.b);
    let fstar = -factors.hstar_apply_mat(&mp.f_theta)? + t * &wk;
    let gstar = -factors.hstar_apply(&mp.f)? + t * &bk;
    let flam = -(t.transpose() * &mp.f_theta) + &u * &wk;
    let glam = -(t.transpose() * &mp.f) + &u * &bk;
    Ok(EqpSolution {
        fstar,
        gstar,
        flam,
        glam,
    })
}

/// Direction of unboundedness after a removal made the reduced Hessian singular.
///
/// `parent` is the (nonsingular) factorization before the removal and `pos`
/// the position of the removed row in it. The returned `d = -T e_pos` keeps
/// the remaining rows active and moves off the removed one (`A_pos d = -1`).
pub fn singular_direction(parent: Option<&KktFactors>, pos: usize) -> Result<DVector<f64>> {
    let parent = parent.ok_or_else(|| Error::NoParentFactorization("no removal recorded".into()))?;
    let t = parent.t().map_err(|_| Error::NoParentFactorization(parent.ws.to_string()))?;
    if pos >= t.ncols() {
        return Err(Error::Invalid(format!("removed position {pos} outside {}", parent.ws)));
    }
    Ok(-t.column(pos).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ws(ix: &[usize]) -> WorkingSet {
        WorkingSet::from_indices(ix.to_vec()).unwrap()
    }

    #[test]
    fn identity_unconstrained() {
        let h = DMatrix::<f64>::identity(2, 2);
        let a = DMatrix::<f64>::zeros(0, 2);
        let f = factorize(&h, &a, &WorkingSet::empty(), DEFAULT_EPS_SING).unwrap();
        assert!(!f.singular);
        assert_relative_eq!(f.z.transpose() * &f.z, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert_eq!(f.z.ncols(), 2);
        let v = DVector::from_vec(vec![0.3, -2.0]);
        assert_relative_eq!(f.hstar_apply(&v).unwrap(), v, epsilon = 1e-12);
    }

    #[test]
    fn zero_block_is_singular() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let a = DMatrix::<f64>::zeros(0, 2);
        let f = factorize(&h, &a, &WorkingSet::empty(), DEFAULT_EPS_SING).unwrap();
        assert!(f.singular);
        assert!(f.hstar_apply(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn reduced_hessian_by_hand() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let f = factorize(&h, &a, &ws(&[0]), DEFAULT_EPS_SING).unwrap();
        assert!(!f.singular);
        assert_eq!(f.z.ncols(), 1);
        assert_relative_eq!(f.z[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.z[(1, 0)], 0.0, epsilon = 1e-12);
        let hr = f.z.transpose() * &h * &f.z;
        assert_relative_eq!(hr[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(&a * &f.y, DMatrix::identity(1, 1), epsilon = 1e-12);
    }

    #[test]
    fn full_rank_working_set_has_empty_null_space() {
        let h = DMatrix::<f64>::identity(2, 2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let f = factorize(&h, &a, &ws(&[0, 1]), DEFAULT_EPS_SING).unwrap();
        assert_eq!(f.z.ncols(), 0);
        assert_eq!(f.hstar_apply(&DVector::from_vec(vec![1.0, 1.0])).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn dependent_rows_rejected() {
        let h = DMatrix::<f64>::identity(3, 3);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            factorize(&h, &a, &ws(&[0, 1]), DEFAULT_EPS_SING),
            Err(Error::DegenerateWorkingSet(_))
        ));
    }

    #[test]
    fn lemma4_by_hand() {
        // parent ws {1}: A = [0 1], H = diag(1,0); T = Y - H*HY = e2
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let parent = factorize(&h, &a, &ws(&[0]), DEFAULT_EPS_SING).unwrap();
        let d = singular_direction(Some(&parent), 0).unwrap();
        assert_relative_eq!(d, DVector::from_vec(vec![0.0, -1.0]), epsilon = 1e-12);
        assert_relative_eq!(&h * &d, DVector::zeros(2), epsilon = 1e-12);
        assert!(singular_direction(None, 0).is_err());
    }

    #[test]
    fn unconstrained_identity_maps() {
        let h = DMatrix::<f64>::identity(2, 2);
        let f_theta = DMatrix::from_row_slice(2, 1, &[1.0, -3.0]);
        let mp = MpQp::new(
            h.clone(),
            DVector::from_vec(vec![0.5, 2.0]),
            f_theta.clone(),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            Region::boxed(&[0.0], &[1.0]),
        )
        .unwrap();
        let fac = factorize(&mp.h, &mp.a, &WorkingSet::empty(), DEFAULT_EPS_SING).unwrap();
        let sol = parametric_eqp(&mp, &fac).unwrap();
        assert_relative_eq!(sol.fstar, -f_theta, epsilon = 1e-12);
        assert_relative_eq!(sol.gstar, -&mp.f, epsilon = 1e-12);
        assert_eq!(sol.flam.nrows(), 0);
        assert_eq!(sol.glam.len(), 0);
    }

    fn contrived() -> MpQp {
        MpQp::new(
            DMatrix::from_row_slice(3, 3, &[0.97, 0.19, 0.15, 0.19, 0.98, 0.05, 0.15, 0.05, 0.99]),
            DVector::zeros(3),
            DMatrix::from_row_slice(3, 2, &[11.3, -44.3, -3.66, -11.9, -32.6, 7.81]),
            DMatrix::from_row_slice(3, 3, &[0.38, 2.20, 0.43, 0.49, 0.57, 0.22, 0.77, 0.46, 0.41]),
            DVector::from_vec(vec![4.1, 3.7, 4.3]),
            DMatrix::from_row_slice(3, 2, &[0.19, -0.89, 0.62, -1.54, -0.59, -1.01]),
            Region::boxed(&[0.0, 0.0], &[1.0, 1.0]),
        )
        .unwrap()
    }

    /// Solves the full KKT matrix by LU at a fixed theta.
    fn kkt_direct(mp: &MpQp, w: &WorkingSet, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = mp.n();
        let r = w.len();
        let ak = w.rows(&mp.a);
        let mut k = DMatrix::zeros(n + r, n + r);
        k.view_mut((0, 0), (n, n)).copy_from(&mp.h);
        k.view_mut((0, n), (n, r)).copy_from(&ak.transpose());
        k.view_mut((n, 0), (r, n)).copy_from(&ak);
        let mut rhs = DVector::zeros(n + r);
        rhs.rows_mut(0, n).copy_from(&(-mp.f_of(theta)));
        rhs.rows_mut(n, r).copy_from(&w.entries(&mp.b_of(theta)));
        let sol = k.lu().solve(&rhs).unwrap();
        (sol.rows(0, n).into_owned(), sol.rows(n, r).into_owned())
    }

    #[test]
    fn contrived_eqp_matches_direct_solve() {
        let mp = contrived();
        let theta = DVector::from_vec(vec![0.3, 0.7]);
        for ix in [vec![0], vec![0, 2], vec![1, 2], vec![0, 1, 2]] {
            let w = ws(&ix);
            let fac = factorize(&mp.h, &mp.a, &w, DEFAULT_EPS_SING).unwrap();
            let sol = parametric_eqp(&mp, &fac).unwrap();
            let x = sol.x(&theta);
            let (x_ref, l_ref) = kkt_direct(&mp, &w, &theta);
            assert_relative_eq!(x, x_ref, epsilon = 1e-9);
            assert_relative_eq!(sol.lam(&theta), l_ref, epsilon = 1e-8);
            let on_manifold = w.rows(&mp.a) * &x - w.entries(&mp.b_of(&theta));
            assert!(on_manifold.amax() <= 1e-8);
        }
    }

    #[test]
    fn range_space_cross_check() {
        let mp = contrived();
        let hinv = mp.h.clone().try_inverse().unwrap();
        for ix in [vec![0], vec![1], vec![0, 2]] {
            let w = ws(&ix);
            let ak = w.rows(&mp.a);
            let s = &ak * &hinv * ak.transpose();
            let sinv = s.try_inverse().unwrap();
            let hs_ref = &hinv - &hinv * ak.transpose() * &sinv * &ak * &hinv;
            let t_ref = &hinv * ak.transpose() * &sinv;
            let u_ref = -&sinv;
            let fac = factorize(&mp.h, &mp.a, &w, DEFAULT_EPS_SING).unwrap();
            assert_relative_eq!(fac.hstar().unwrap(), hs_ref, epsilon = 1e-7);
            assert_relative_eq!(fac.t().unwrap().clone(), t_ref, epsilon = 1e-7);
            assert_relative_eq!(fac.u(&mp.h).unwrap(), u_ref, epsilon = 1e-7);
        }
    }

    fn spd(n: usize, vals: &[f64]) -> DMatrix<f64> {
        let m = DMatrix::from_iterator(n, n, vals.iter().copied());
        &m * m.transpose() + DMatrix::identity(n, n) * 0.1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn factors_are_consistent(
            n in 2usize..6,
            seed in proptest::collection::vec(-1.0f64..1.0, 36),
            rows in proptest::collection::vec(-1.0f64..1.0, 36),
            r in 0usize..4,
        ) {
            let r = r.min(n - 1);
            let h = spd(n, &seed[..n * n]);
            let a = DMatrix::from_iterator(r, n, rows[..r * n].iter().copied());
            let w = WorkingSet::all(r);
            if let Ok(f) = factorize(&h, &a, &w, DEFAULT_EPS_SING) {
                prop_assert!((&a * &f.z).amax() <= 1e-10);
                prop_assert!((&a * &f.y - DMatrix::identity(r, r)).amax() <= 1e-8);
                prop_assert!((f.z.transpose() * &f.z - DMatrix::identity(n - r, n - r)).amax() <= 1e-10);
                let hs = f.hstar().unwrap();
                // H* H H* = H* and A H* = 0
                prop_assert!((&hs * &h * &hs - &hs).amax() <= 1e-8);
                prop_assert!((&a * &hs).amax() <= 1e-10);
            }
        }

        #[test]
        fn lemma1_projection(
            n in 2usize..7,
            seed in proptest::collection::vec(-1.0f64..1.0, 49),
            rows in proptest::collection::vec(-1.0f64..1.0, 42),
            r in 0usize..5,
        ) {
            let r = r.min(n - 1);
            let h = spd(n, &seed[..n * n]);
            let a = DMatrix::from_iterator(r + 1, n, rows[..(r + 1) * n].iter().copied());
            let small = WorkingSet::all(r);
            let big = WorkingSet::all(r + 1);
            if let (Ok(fk), Ok(fk1)) = (
                factorize(&h, &a, &small, DEFAULT_EPS_SING),
                factorize(&h, &a, &big, DEFAULT_EPS_SING),
            ) {
                let hk = fk.hstar().unwrap();
                let hk1 = fk1.hstar().unwrap();
                prop_assert!((&hk1 * &h * &hk - &hk1).amax() <= 1e-8);
            }
        }
    }
}
