//! Problem transformations (dual, quadratic penalty, LP), a condensed MPC
//! demo generator and the per-iteration FLOP model.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ConvexityClass, MpQp, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FlopMethod {
    #[default]
    NullSpace,
    RangeSpace,
    FullSpace,
}

impl fmt::Display for FlopMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlopMethod::NullSpace => "nullspace",
            FlopMethod::RangeSpace => "rangespace",
            FlopMethod::FullSpace => "fullspace",
        })
    }
}

impl FromStr for FlopMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nullspace" => Ok(FlopMethod::NullSpace),
            "rangespace" => Ok(FlopMethod::RangeSpace),
            "fullspace" => Ok(FlopMethod::FullSpace),
            other => Err(Error::Invalid(format!("unknown flop method {other}"))),
        }
    }
}

/// Dense flop count for one search-direction computation with `w` active rows.
///
/// * nullspace: form `Z'HZ` (`2n^2 z + 2n z^2`), Cholesky `z^3/3`, two solves
///   and the back-projection (`2z^2 + 4nz`), with `z = n - w`.
/// * rangespace: Schur complement `A H^{-1} A'` given a factorized `H`
///   (`2n^2 w + 2n w^2`), Cholesky `w^3/3`, solves `2w^2 + 4nw + 2n^2`.
/// * fullspace: symmetric indefinite factorization of the `(n+w)` KKT matrix,
///   `(n+w)^3/3 + 2(n+w)^2`.
pub fn flop_model(w: usize, n: usize, method: FlopMethod) -> u64 {
    let n = n as u64;
    let w = (w as u64).min(n);
    match method {
        FlopMethod::NullSpace => {
            let z = n - w;
            2 * n * n * z + 2 * n * z * z + z * z * z / 3 + 2 * z * z + 4 * n * z
        }
        FlopMethod::RangeSpace => 2 * n * n * w + 2 * n * w * w + w * w * w / 3 + 2 * w * w + 4 * n * w + 2 * n * n,
        FlopMethod::FullSpace => {
            let k = n + w;
            k * k * k / 3 + 2 * k * k
        }
    }
}

/// Data needed to map a dual solution back to the primal variables.
#[derive(Clone, Debug)]
pub struct DualRecovery {
    pub hinv: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub f: DVector<f64>,
    pub f_theta: DMatrix<f64>,
}

/// Dual of a strictly convex mpQP; variables are the `m` multipliers and the
/// only constraints are `-lambda <= 0`.
pub fn build_dual(mp: &MpQp) -> Result<(MpQp, DualRecovery)> {
    if mp.convexity_class != ConvexityClass::StrictlyConvex {
        return Err(Error::Unsupported(format!("dual needs a strictly convex H, got {}", mp.convexity_class)));
    }
    let hinv = mp
        .h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Invalid("H is not positive definite".into()))?
        .inverse();
    let m = mp.m();
    let ahinv = &mp.a * &hinv;
    let hd = &ahinv * mp.a.transpose();
    let fd = &ahinv * &mp.f + &mp.b;
    let fdt = &ahinv * &mp.f_theta + &mp.w;
    let dual = MpQp::new(
        hd,
        fd,
        fdt,
        -DMatrix::<f64>::identity(m, m),
        DVector::zeros(m),
        DMatrix::zeros(m, mp.p()),
        mp.theta0.clone(),
    )?;
    Ok((
        dual,
        DualRecovery {
            hinv,
            a: mp.a.clone(),
            f: mp.f.clone(),
            f_theta: mp.f_theta.clone(),
        },
    ))
}

/// `x* = -H^{-1}(f(theta) + A' lambda*)`.
pub fn recover_primal(rec: &DualRecovery, theta: &DVector<f64>, lam: &DVector<f64>) -> DVector<f64> {
    -(&rec.hinv * (&rec.f + &rec.f_theta * theta + rec.a.transpose() * lam))
}

pub const DEFAULT_RHO: f64 = 1e4;

/// Moves `Ax + s = b + W theta` into the objective with weight `rho / 2`;
/// variables are `(x, s)` and the only constraints are `s >= 0`.
pub fn penalty_reform(mp: &MpQp, rho: f64) -> Result<MpQp> {
    if !(rho > 0.0) {
        return Err(Error::Invalid(format!("penalty weight must be positive, got {rho}")));
    }
    let n = mp.n();
    let m = mp.m();
    let p = mp.p();
    let nn = n + m;
    let a = &mp.a;
    let mut h = DMatrix::zeros(nn, nn);
    h.view_mut((0, 0), (n, n)).copy_from(&(&mp.h + a.transpose() * a * rho));
    h.view_mut((0, n), (n, m)).copy_from(&(a.transpose() * rho));
    h.view_mut((n, 0), (m, n)).copy_from(&(a * rho));
    h.view_mut((n, n), (m, m)).copy_from(&(DMatrix::identity(m, m) * rho));
    let mut f = DVector::zeros(nn);
    f.rows_mut(0, n).copy_from(&(&mp.f - a.transpose() * &mp.b * rho));
    f.rows_mut(n, m).copy_from(&(-&mp.b * rho));
    let mut ft = DMatrix::zeros(nn, p);
    ft.view_mut((0, 0), (n, p)).copy_from(&(&mp.f_theta - a.transpose() * &mp.w * rho));
    ft.view_mut((n, 0), (m, p)).copy_from(&(-&mp.w * rho));
    let mut an = DMatrix::zeros(m, nn);
    an.view_mut((0, n), (m, m)).copy_from(&(-DMatrix::<f64>::identity(m, m)));
    MpQp::new(h, f, ft, an, DVector::zeros(m), DMatrix::zeros(m, p), mp.theta0.clone())
}

/// Parametric LP `min (c + C theta)'x  s.t.  Ax <= b + W theta`.
pub fn lp_frontend(
    c: DVector<f64>,
    c_theta: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    w: DMatrix<f64>,
    theta0: Region,
) -> Result<MpQp> {
    let n = c.len();
    MpQp::new(DMatrix::zeros(n, n), c, c_theta, a, b, w, theta0)
}

/// Condensed input-constrained MPC for the discrete double integrator
/// `x+ = [1 1; 0 1] x + [0.5; 1] u`, stage cost `q|x|^2 + r u^2`, terminal
/// cost `q|x_N|^2`, bounds `|u_k| <= umax`. The parameter is the initial state.
pub fn mpc_double_integrator(horizon: usize, q: f64, r: f64, umax: f64, state_box: [f64; 2]) -> Result<MpQp> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    let ad = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let bd = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
    let nh = horizon;
    // stacked x_1..x_N = sx x_0 + su U
    let mut sx = DMatrix::zeros(2 * nh, 2);
    let mut su = DMatrix::zeros(2 * nh, nh);
    let mut apow = DMatrix::<f64>::identity(2, 2);
    for k in 0..nh {
        apow = &ad * &apow;
        sx.view_mut((2 * k, 0), (2, 2)).copy_from(&apow);
        for j in 0..=k {
            let mut blk = bd.clone();
            for _ in 0..(k - j) {
                blk = &ad * blk;
            }
            su.view_mut((2 * k, j), (2, 1)).copy_from(&blk);
        }
    }
    let h = (su.transpose() * &su * q + DMatrix::<f64>::identity(nh, nh) * r) * 2.0;
    let f_theta = su.transpose() * &sx * (2.0 * q);
    let mut a = DMatrix::zeros(2 * nh, nh);
    a.view_mut((0, 0), (nh, nh)).copy_from(&DMatrix::<f64>::identity(nh, nh));
    a.view_mut((nh, 0), (nh, nh)).copy_from(&(-DMatrix::<f64>::identity(nh, nh)));
    let b = DVector::from_element(2 * nh, umax);
    MpQp::new(
        h,
        DVector::zeros(nh),
        f_theta,
        a,
        b,
        DMatrix::zeros(2 * nh, 2),
        Region::boxed(&[-state_box[0], -state_box[1]], &state_box),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WorkingSet;
    use crate::solver::{objective, solve, SolveStatus, SolverOptions};
    use approx::assert_relative_eq;

    #[test]
    fn flop_model_edges() {
        assert_eq!(flop_model(3, 3, FlopMethod::NullSpace), 0);
        let n = 4u64;
        assert!(flop_model(0, 4, FlopMethod::NullSpace) >= n * n * n / 3);
        for method in [FlopMethod::NullSpace, FlopMethod::RangeSpace, FlopMethod::FullSpace] {
            let costs: Vec<u64> = (0..=6).map(|w| flop_model(w, 6, method)).collect();
            match method {
                FlopMethod::NullSpace => assert!(costs.windows(2).all(|c| c[0] >= c[1])),
                _ => assert!(costs.windows(2).all(|c| c[0] <= c[1])),
            }
        }
    }

    #[test]
    fn identity_dual() {
        let mp = MpQp::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.5, 2.0]),
            DMatrix::zeros(2, 1),
            Region::boxed(&[0.0], &[1.0]),
        )
        .unwrap();
        let (d, rec) = build_dual(&mp).unwrap();
        assert_relative_eq!(d.h, DMatrix::identity(2, 2), epsilon = 1e-14);
        assert_relative_eq!(d.f, DVector::from_vec(vec![1.5, 1.0]), epsilon = 1e-14);
        assert_eq!(d.b, DVector::zeros(2));
        assert_eq!(d.w, DMatrix::zeros(2, 1));
        let x = recover_primal(&rec, &DVector::zeros(1), &DVector::zeros(2));
        assert_relative_eq!(x, -&mp.f, epsilon = 1e-14);
    }

    #[test]
    fn dual_rejects_semidefinite() {
        let mp = MpQp::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            Region::boxed(&[0.0], &[1.0]),
        )
        .unwrap();
        assert!(matches!(build_dual(&mp), Err(Error::Unsupported(_))));
    }

    #[test]
    fn penalty_slack_structure() {
        let mp = MpQp::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-2.0, -2.0]),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[0.5]),
            Region::boxed(&[0.0], &[1.0]),
        )
        .unwrap();
        let pen = penalty_reform(&mp, 1e6).unwrap();
        assert_eq!(pen.convexity_class, ConvexityClass::StrictlyConvex);
        let th = DVector::from_element(1, 0.4);
        let w0 = WorkingSet::all(1);
        let log = solve(&pen, &th, &DVector::zeros(3), &w0, &SolverOptions::default()).unwrap();
        assert_eq!(log.status, SolveStatus::Optimal);
        // original optimum: x = (0.6, 0.6) on x1 + x2 = 1.2
        assert_relative_eq!(log.x[0], 0.6, epsilon = 1e-5);
        assert_relative_eq!(log.x[1], 0.6, epsilon = 1e-5);
        let slack = (1.0 + 0.5 * 0.4 - log.x[0] - log.x[1]).max(0.0);
        assert!((log.x[2] - slack).abs() <= 1e-6);
        assert!(objective(&pen, &th, &log.x).is_finite());
    }

    #[test]
    fn double_integrator_structure() {
        let mp = mpc_double_integrator(3, 1.0, 0.1, 1.0, [3.0, 1.5]).unwrap();
        assert_eq!((mp.n(), mp.m(), mp.p()), (3, 6, 2));
        assert_eq!(mp.w, DMatrix::zeros(6, 2));
        assert_eq!(mp.convexity_class, ConvexityClass::StrictlyConvex);
        assert!(mpc_double_integrator(0, 1.0, 1.0, 1.0, [1.0, 1.0]).is_err());
    }
}
