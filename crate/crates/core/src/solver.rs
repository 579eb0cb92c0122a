//! Primal active-set method for a fixed parameter, including the singular
//! (semi-definite / LP) extension.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::frontends::{flop_model, FlopMethod};
use crate::kkt::{factorize, singular_direction, KktFactors, DEFAULT_EPS_SING};
use crate::model::{MpQp, WorkingSet, WsChange};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub eps_dual: f64,
    pub eps_primal: f64,
    pub eps_sing: f64,
    /// `None` means `10 (m + n)`.
    pub max_iter: Option<usize>,
    /// Use the projected gradient instead of the null-space ray when the
    /// reduced Hessian is singular.
    pub lp_gradient_direction: bool,
    pub flop_method: FlopMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_dual: 0.0,
            eps_primal: 1e-9,
            eps_sing: DEFAULT_EPS_SING,
            max_iter: None,
            lp_gradient_direction: false,
            flop_method: FlopMethod::NullSpace,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Unbounded,
    MaxIter,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIter => "max_iter",
        }
    }
}

/// What happened in one pass of the main loop.
#[derive(Clone, Debug)]
pub struct Step {
    pub ws: WorkingSet,
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub singular: bool,
    /// Step length taken towards a blocking constraint, `None` on a full step.
    pub alpha: Option<f64>,
    pub change: Option<WsChange>,
}

#[derive(Clone, Debug)]
pub struct SolveLog {
    pub x: DVector<f64>,
    /// Multipliers of the final working set (empty unless optimal).
    pub lam: DVector<f64>,
    pub ws: WorkingSet,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wschanges: Vec<WsChange>,
    pub alphas: Vec<f64>,
    pub flops: u64,
    pub trace: Vec<Step>,
}

impl SolveLog {
    pub fn change_codes(&self) -> Vec<i64> {
        self.wschanges.iter().map(|c| c.code()).collect()
    }
}

pub fn objective(mp: &MpQp, theta: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&mp.h * x)) + mp.f_of(theta).dot(x)
}

fn argmin_lowest(vals: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vals {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}

/// Runs the primal active-set method from `(x0, w0)` at parameter `theta`.
pub fn solve(mp: &MpQp, theta: &DVector<f64>, x0: &DVector<f64>, w0: &WorkingSet, opts: &SolverOptions) -> Result<SolveLog> {
    let n = mp.n();
    let m = mp.m();
    if theta.len() != mp.p() || x0.len() != n {
        return Err(crate::error::dim_err("theta/x0", format!("{}/{}", mp.p(), n), format!("{}/{}", theta.len(), x0.len())));
    }
    let bt = mp.b_of(theta);
    let ftheta = mp.f_of(theta);
    let tol_feas = opts.eps_primal.max(1e-12) * (1.0 + bt.amax());
    let s0 = &bt - &mp.a * x0;
    if let Some(i) = (0..m).find(|&i| s0[i] < -tol_feas) {
        return Err(Error::InfeasibleStart(format!("constraint {} violated by {:.3e}", i + 1, -s0[i])));
    }
    if let Some(&i) = w0.indices().iter().find(|&&i| i >= m || s0[i].abs() > tol_feas) {
        return Err(Error::InfeasibleStart(format!("working-set constraint {} is not active at x0", i + 1)));
    }
    let max_iter = opts.max_iter.unwrap_or(10 * (m + n));

    let mut x = x0.clone();
    let mut ws = w0.clone();
    let mut log = SolveLog {
        x: x.clone(),
        lam: DVector::zeros(0),
        ws: ws.clone(),
        status: SolveStatus::MaxIter,
        iterations: 0,
        wschanges: Vec::new(),
        alphas: Vec::new(),
        flops: 0,
        trace: Vec::new(),
    };
    // factorization before the latest removal and the removed row's position in it
    let mut parent: Option<(KktFactors, usize)> = None;

    while log.iterations < max_iter {
        log.iterations += 1;
        log.flops += flop_model(ws.len(), n, opts.flop_method);
        let fac = factorize(&mp.h, &mp.a, &ws, opts.eps_sing)?;
        let g = &mp.h * &x + &ftheta;
        let s = &bt - &mp.a * &x;
        let inactive = ws.complement(m);

        let mut step = Step {
            ws: ws.clone(),
            x: x.clone(),
            p: DVector::zeros(n),
            singular: fac.singular,
            alpha: None,
            change: None,
        };

        let ray = if fac.singular {
            if opts.lp_gradient_direction {
                let p = fac.projected_gradient(&g);
                if p.norm() <= 1e-12 * g.norm().max(1.0) {
                    None
                } else {
                    Some(p)
                }
            } else {
                let (pf, pos) = parent
                    .as_ref()
                    .map(|(f, pos)| (Some(f), *pos))
                    .unwrap_or((None, 0));
                if pf.is_none() {
                    return Err(Error::NoParentFactorization(ws.to_string()));
                }
                Some(singular_direction(pf, pos)?)
            }
        } else {
            None
        };

        if let Some(d) = ray {
            step.p = d.clone();
            let sigma = &mp.a * &d;
            let scale = d.norm().max(1.0);
            let blocking = argmin_lowest(
                inactive
                    .iter()
                    .filter(|&&i| sigma[i] > 1e-12 * scale * mp.a.row(i).norm().max(1.0))
                    .map(|&i| (i, s[i].max(0.0) / sigma[i])),
            );
            match blocking {
                None => {
                    log.status = SolveStatus::Unbounded;
                    log.trace.push(step);
                    break;
                }
                Some((j, alpha)) => {
                    x += &d * alpha;
                    ws = ws.with(j);
                    log.wschanges.push(WsChange::Add(j));
                    log.alphas.push(alpha);
                    step.alpha = Some(alpha);
                    step.change = Some(WsChange::Add(j));
                    log.trace.push(step);
                    parent = None;
                    continue;
                }
            }
        }

        // Newton step to the CSP (zero when stationary on a singular face)
        let p = if fac.singular { DVector::zeros(n) } else { -fac.hstar_apply(&g)? };
        step.p = p.clone();
        let sigma = &mp.a * &p;
        let blocking = argmin_lowest(
            inactive
                .iter()
                .filter(|&&i| s[i] - sigma[i] < -opts.eps_primal)
                .map(|&i| (i, s[i].max(0.0) / sigma[i])),
        );
        if let Some((j, alpha)) = blocking {
            let alpha = alpha.clamp(0.0, 1.0);
            x += &p * alpha;
            ws = ws.with(j);
            log.wschanges.push(WsChange::Add(j));
            log.alphas.push(alpha);
            step.alpha = Some(alpha);
            step.change = Some(WsChange::Add(j));
            log.trace.push(step);
            parent = None;
            continue;
        }

        x += &p;
        let g = &mp.h * &x + &ftheta;
        let lam = fac.multipliers(&g);
        let worst = argmin_lowest(lam.iter().copied().enumerate());
        match worst {
            Some((pos, v)) if v < -opts.eps_dual => {
                let l = ws.indices()[pos];
                ws = ws.without(l);
                log.wschanges.push(WsChange::Remove(l));
                step.change = Some(WsChange::Remove(l));
                log.trace.push(step);
                parent = Some((fac, pos));
            }
            _ => {
                log.lam = lam;
                log.status = SolveStatus::Optimal;
                log.trace.push(step);
                break;
            }
        }
    }
    log.x = x;
    log.ws = ws;
    Ok(log)
}
