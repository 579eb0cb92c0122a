//! Exact iteration-complexity certification of the primal active-set method.
//!
//! A stack of [`RegionTuple`]s is processed until every tuple is terminal.
//! A tuple at a CSP is split by the sign pattern of its multipliers (removal
//! or optimality); any other tuple is split by which constraint blocks first
//! (addition) or whether the CSP is reached.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontends::{flop_model, FlopMethod};
use crate::kkt::{factorize, parametric_eqp, singular_direction, KktFactors, DEFAULT_EPS_SING};
use crate::lp::{maximize, LpOutcome};
use crate::model::{
    AffineMap, HalfPlane, MpQp, Partition, PartitionMeta, QuadIneq, Region, RegionTuple, Status, WorkingSet, WsChange,
};
use crate::oracle::{polyhedron_feasible, region_feasible, relax_quadratic, OracleConfig, Verdict};

/// Entries of `[G_sigma]` at or below this (relative) level never block.
const SIGMA_TOL: f64 = 1e-10;
/// Quadratic terms whose entries are all below this are treated as affine.
const QUAD_ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CertOptions {
    pub eps_dual: f64,
    pub relax_quadratics: bool,
    pub prune_infeasible_iterates: bool,
    /// `None` means `4 m` (at least 1).
    pub max_k: Option<usize>,
    pub lp_gradient_direction: bool,
    pub eps_sing: f64,
    pub flop_method: FlopMethod,
    pub oracle: OracleConfig,
    /// Worker threads; 1 processes the stack on the calling thread.
    pub workers: usize,
    pub label: String,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions {
            eps_dual: 0.0,
            relax_quadratics: false,
            prune_infeasible_iterates: false,
            max_k: None,
            lp_gradient_direction: false,
            eps_sing: DEFAULT_EPS_SING,
            flop_method: FlopMethod::NullSpace,
            oracle: OracleConfig::default(),
            workers: 1,
            label: String::new(),
        }
    }
}

impl CertOptions {
    /// Options that influence the partition, in a fixed order. Worker count is
    /// deliberately absent: it never changes the result.
    pub fn recorded(&self) -> Vec<(String, String)> {
        vec![
            ("eps_dual".into(), format!("{:e}", self.eps_dual)),
            ("relax_quadratics".into(), self.relax_quadratics.to_string()),
            ("prune_infeasible_iterates".into(), self.prune_infeasible_iterates.to_string()),
            ("eps_region".into(), format!("{:e}", self.oracle.eps_region)),
            ("eps_sing".into(), format!("{:e}", self.eps_sing)),
            ("lp_gradient_direction".into(), self.lp_gradient_direction.to_string()),
            ("flop_method".into(), self.flop_method.to_string()),
            ("external_oracle".into(), self.oracle.external.is_some().to_string()),
        ]
    }
}

/// Read-only data shared by every work item.
pub struct CertContext<'a> {
    pub mp: &'a MpQp,
    pub w0: WorkingSet,
    pub start: AffineMap,
    /// CSP maps of the initial working set (Case-2 anchors); absent when its
    /// reduced Hessian is singular.
    pub csp0: Option<AffineMap>,
    pub opts: &'a CertOptions,
    cache: Mutex<HashMap<Vec<usize>, Arc<KktFactors>>>,
}

/// Row `i` of `mat` as a column vector.
fn row(mat: &DMatrix<f64>, i: usize) -> DVector<f64> {
    mat.row(i).transpose()
}

impl<'a> CertContext<'a> {
    pub fn new(mp: &'a MpQp, w0: WorkingSet, start: AffineMap, opts: &'a CertOptions) -> Result<Self> {
        let (n, m, p) = (mp.n(), mp.m(), mp.p());
        mp.theta0.check_dim(p)?;
        if start.f.nrows() != n || start.f.ncols() != p || start.g.len() != n {
            return Err(crate::error::dim_err("start map", format!("{n}x{p}"), format!("{}x{}", start.f.nrows(), start.f.ncols())));
        }
        if w0.indices().iter().any(|&i| i >= m) {
            return Err(Error::Invalid(format!("initial working set {w0} exceeds m = {m}")));
        }
        if !mp.theta0.is_polyhedral() {
            return Err(Error::Invalid("Theta0 must be polyhedral".into()));
        }
        let v = polyhedron_feasible(&mp.theta0, p, opts.oracle.eps_region);
        if v.verdict == Verdict::Empty {
            return Err(Error::InfeasibleStart("Theta0 is empty".into()));
        }
        // x0(theta) must be feasible on Theta0 and keep W0 active
        let fs = &mp.a * &start.f - &mp.w;
        let gs = &mp.a * &start.g - &mp.b;
        let g_rows: Vec<Vec<f64>> = mp.theta0.linear.iter().map(|h| h.c.iter().copied().collect()).collect();
        let h_rows: Vec<f64> = mp.theta0.linear.iter().map(|h| h.d).collect();
        for i in 0..m {
            let c: Vec<f64> = fs.row(i).iter().copied().collect();
            let tol = 1e-9 * (1.0 + mp.b[i].abs() + gs[i].abs());
            if w0.contains(i) && (fs.row(i).amax() > tol || gs[i].abs() > tol) {
                return Err(Error::InfeasibleStart(format!("constraint {} of W0 is not active at x0", i + 1)));
            }
            match maximize(&c, &g_rows, &h_rows) {
                LpOutcome::Optimal { value, .. } => {
                    if value + gs[i] > tol {
                        return Err(Error::InfeasibleStart(format!(
                            "x0 violates constraint {} by {:.3e} on Theta0",
                            i + 1,
                            value + gs[i]
                        )));
                    }
                }
                LpOutcome::Unbounded if c.iter().any(|v| *v != 0.0) => {
                    return Err(Error::InfeasibleStart(format!("x0 violates constraint {} on unbounded Theta0", i + 1)));
                }
                LpOutcome::Unbounded => {}
                other => return Err(Error::Lp(format!("{other:?}"))),
            }
        }
        let fac0 = factorize(&mp.h, &mp.a, &w0, opts.eps_sing)?;
        let csp0 = if fac0.singular {
            None
        } else {
            let s = parametric_eqp(mp, &fac0)?;
            Some(AffineMap::new(s.fstar, s.gstar))
        };
        Ok(CertContext {
            mp,
            w0,
            start,
            csp0,
            opts,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn initial_tuple(&self) -> RegionTuple {
        RegionTuple {
            theta: self.mp.theta0.clone(),
            ws: self.w0.clone(),
            affine: Some(self.start.clone()),
            status: Status::InProgress,
            k: 0,
            last_removed: None,
            case2: true,
            wschanges: Vec::new(),
            flops: 0,
        }
    }

    fn p(&self) -> usize {
        self.mp.p()
    }

    fn keep(&self, r: &Region) -> Result<bool> {
        Ok(region_feasible(r, self.p(), &self.opts.oracle)?.keep())
    }

    /// Cached per working set; factorizations are pure functions of the index set.
    fn factorize(&self, ws: &WorkingSet) -> Result<Arc<KktFactors>> {
        let key = ws.indices().to_vec();
        if let Some(f) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(f.clone());
        }
        let f = Arc::new(factorize(&self.mp.h, &self.mp.a, ws, self.opts.eps_sing)?);
        self.cache.lock().expect("cache lock").insert(key, f.clone());
        Ok(f)
    }

    /// Child that stays on the same working set for one more pass.
    fn pass_child(&self, t: &RegionTuple, theta: Region, affine: Option<AffineMap>, status: Status) -> RegionTuple {
        RegionTuple {
            theta,
            ws: t.ws.clone(),
            affine,
            status,
            k: t.k + 1,
            last_removed: t.last_removed,
            case2: t.case2,
            wschanges: t.wschanges.clone(),
            flops: t.flops + flop_model(t.ws.len(), self.mp.n(), self.opts.flop_method),
        }
    }

    fn add_child(&self, t: &RegionTuple, j: usize, theta: Region, affine: Option<AffineMap>, case2: bool) -> RegionTuple {
        let mut c = self.pass_child(t, theta, affine, Status::InProgress);
        c.ws = t.ws.with(j);
        c.case2 = case2;
        c.wschanges.push(WsChange::Add(j));
        c
    }

    /// `{ theta : x*(theta) feasible for every inactive row }`, tightened by the
    /// primal-feasibility rows of the CSP when pruning is enabled.
    fn csp_region(&self, t: &RegionTuple, csp: &AffineMap) -> Vec<HalfPlane> {
        let fss = &self.mp.w - &self.mp.a * &csp.f;
        let gss = &self.mp.b - &self.mp.a * &csp.g;
        t.ws
            .complement(self.mp.m())
            .into_iter()
            .map(|i| HalfPlane::new(-row(&fss, i), gss[i], false))
            .collect()
    }

    /// Splits `t` for one pass of the solver.
    pub fn process(&self, t: &RegionTuple) -> Result<Vec<RegionTuple>> {
        match t.status {
            Status::Csp => self.mode_a(t),
            Status::InProgress => self.mode_b(t),
            _ => Ok(vec![t.clone()]),
        }
    }

    /// Removal or optimality at a CSP.
    pub fn mode_a(&self, t: &RegionTuple) -> Result<Vec<RegionTuple>> {
        let mp = self.mp;
        let t = &self.prune_infeasible_iterates(t);
        let affine = t
            .affine
            .as_ref()
            .ok_or_else(|| Error::Invalid("CSP tuple without affine iterate".into()))?;
        let fac = self.factorize(&t.ws)?;
        let (flam, glam) = if fac.singular {
            // stationary on a singular face: least-squares multipliers of the affine iterate
            let yt = fac.y.transpose();
            (-(&yt * (&mp.h * &affine.f + &mp.f_theta)), -(&yt * (&mp.h * &affine.g + &mp.f)))
        } else {
            let sol = parametric_eqp(mp, &fac)?;
            (sol.flam, sol.glam)
        };
        let eps = self.opts.eps_dual;
        let idx = t.ws.indices();
        let mut out = Vec::new();
        for (pj, &j) in idx.iter().enumerate() {
            let mut lin = vec![HalfPlane::new(row(&flam, pj), -eps - glam[pj], true)];
            for (pi, &i) in idx.iter().enumerate() {
                if pi == pj {
                    continue;
                }
                // lambda_j below lambda_i; ties go to the lower index
                lin.push(HalfPlane::new(row(&flam, pj) - row(&flam, pi), glam[pi] - glam[pj], i < j));
            }
            let theta = t.theta.intersect(lin, Vec::new());
            if self.keep(&theta)? {
                let mut c = t.clone();
                c.theta = theta;
                c.ws = t.ws.without(j);
                c.status = Status::InProgress;
                c.last_removed = Some(j);
                c.case2 = false;
                c.wschanges.push(WsChange::Remove(j));
                out.push(c);
            }
        }
        let lin: Vec<HalfPlane> = (0..idx.len())
            .map(|pj| HalfPlane::new(-row(&flam, pj), glam[pj] + eps, false))
            .collect();
        let theta = t.theta.intersect(lin, Vec::new());
        if self.keep(&theta)? {
            let mut c = t.clone();
            c.theta = theta;
            c.status = Status::Optimal;
            out.push(c);
        }
        Ok(out)
    }

    pub fn mode_b(&self, t: &RegionTuple) -> Result<Vec<RegionTuple>> {
        let fac = self.factorize(&t.ws)?;
        if fac.singular {
            let d = self.singular_ray(t, &fac)?;
            return match d {
                Some(d) => self.mode_b_singular(t, &d),
                None => {
                    let theta = t.theta.clone();
                    Ok(vec![self.pass_child(t, theta, t.affine.clone(), Status::Csp)])
                }
            };
        }
        let sol = parametric_eqp(self.mp, &fac)?;
        let csp = AffineMap::new(sol.fstar, sol.gstar);
        if fac.z.ncols() == 0 {
            // vertex: the CSP is the current point
            return Ok(vec![self.pass_child(t, t.theta.clone(), Some(csp), Status::Csp)]);
        }
        if t.case2 {
            self.mode_b_case2(t, &fac, &csp)
        } else {
            self.mode_b_case1(t, &fac, &csp)
        }
    }

    /// Fixed search direction on a singular face; `None` means the iterate is
    /// already stationary (gradient variant only).
    fn singular_ray(&self, t: &RegionTuple, fac: &KktFactors) -> Result<Option<DVector<f64>>> {
        let mp = self.mp;
        if self.opts.lp_gradient_direction {
            let aff = t
                .affine
                .as_ref()
                .ok_or_else(|| Error::Unsupported("gradient step from a non-affine iterate".into()))?;
            let zzt = &fac.z * fac.z.transpose();
            let dep = &zzt * (&mp.h * &aff.f + &mp.f_theta);
            if dep.amax() > 1e-10 {
                return Err(Error::Unsupported(
                    "gradient direction depends on the parameter (needs f_theta = 0 on the face)".into(),
                ));
            }
            let d = -(&zzt * (&mp.h * &aff.g + &mp.f));
            let g = &mp.h * &aff.g + &mp.f;
            return Ok(if d.norm() <= 1e-12 * g.norm().max(1.0) { None } else { Some(d) });
        }
        let l = match t.wschanges.last() {
            Some(WsChange::Remove(l)) => *l,
            _ => return Err(Error::NoParentFactorization(t.ws.to_string())),
        };
        let parent_ws = t.ws.with(l);
        let parent = self.factorize(&parent_ws)?;
        let pos = parent_ws.position(l).expect("removed index in parent");
        singular_direction(Some(&parent), pos).map(Some)
    }

    /// Pairwise first-blocking inequalities `K theta < L` for candidate `j`
    /// along a direction with slope `gs` and affine slack `(fs, gsl)`.
    fn kl_rows(&self, j: usize, cands: &[usize], gsig: &DVector<f64>, fs: &DMatrix<f64>, gsl: &DVector<f64>) -> Vec<HalfPlane> {
        cands
            .iter()
            .filter(|&&i| i != j)
            .map(|&i| {
                let k = row(fs, j) * gsig[i] - row(fs, i) * gsig[j];
                let l = -gsig[i] * gsl[j] + gsig[j] * gsl[i];
                HalfPlane::new(k, l, i < j)
            })
            .collect()
    }

    fn candidates(&self, t: &RegionTuple, gsig: &DVector<f64>, dnorm: f64) -> Vec<usize> {
        t.ws
            .complement(self.mp.m())
            .into_iter()
            .filter(|&i| gsig[i] > SIGMA_TOL * (self.mp.a.row(i).norm() * dnorm).max(f64::MIN_POSITIVE))
            .collect()
    }

    /// Addition after at least one removal: affine iterates, direction `-H* n_hat`.
    pub fn mode_b_case1(&self, t: &RegionTuple, fac: &KktFactors, csp: &AffineMap) -> Result<Vec<RegionTuple>> {
        let mp = self.mp;
        let aff = t
            .affine
            .as_ref()
            .ok_or_else(|| Error::Invalid("Case-1 tuple without affine iterate".into()))?;
        let nhat = t
            .nhat(mp)
            .ok_or_else(|| Error::Unsupported(format!("no removal recorded for {} outside Case 2", t.ws)))?;
        // step is lambda_l H* a_l with lambda_l < 0
        let v = -fac.hstar_apply(&nhat)?;
        let gsig = &mp.a * &v;
        let fs = &mp.w - &mp.a * &aff.f;
        let gsl = &mp.b - &mp.a * &aff.g;
        let fss = &mp.w - &mp.a * &csp.f;
        let gss = &mp.b - &mp.a * &csp.g;
        let cands = self.candidates(t, &gsig, v.norm());
        let mut out = Vec::new();
        for &j in &cands {
            let mut lin = vec![HalfPlane::new(row(&fss, j), -gss[j], true)];
            lin.extend(self.kl_rows(j, &cands, &gsig, &fs, &gsl));
            let theta = t.theta.intersect(lin, Vec::new());
            if self.keep(&theta)? {
                let fp = &aff.f + &v * (fs.row(j) / gsig[j]);
                let gp = &aff.g + &v * (gsl[j] / gsig[j]);
                out.push(self.add_child(t, j, theta, Some(AffineMap::new(fp, gp)), false));
            }
        }
        let theta = t.theta.intersect(self.csp_region(t, csp), Vec::new());
        if self.keep(&theta)? {
            out.push(self.pass_child(t, theta, Some(csp.clone()), Status::Csp));
        }
        Ok(out)
    }

    /// Addition before any removal; step-length comparisons become quadratic.
    pub fn mode_b_case2(&self, t: &RegionTuple, fac: &KktFactors, csp: &AffineMap) -> Result<Vec<RegionTuple>> {
        let mp = self.mp;
        let p = self.p();
        let csp0 = self
            .csp0
            .as_ref()
            .ok_or_else(|| Error::NoParentFactorization(self.w0.to_string()))?;
        let x0 = &self.start;
        let dp_f = &csp0.f - &x0.f;
        let dp_g = &csp0.g - &x0.g;
        if t.wschanges.is_empty() && dp_f.amax() <= 1e-12 && dp_g.amax() <= 1e-12 {
            // started at a CSP
            return Ok(vec![self.pass_child(t, t.theta.clone(), Some(csp.clone()), Status::Csp)]);
        }
        let hs = fac.hstar()?;
        let mmat = &hs * &mp.h;
        let tk = fac.t()?;
        let wk = t.ws.rows(&mp.w);
        let bk = t.ws.entries(&mp.b);
        let fts = &mp.w - &mp.a * (&mmat * &x0.f + tk * &wk);
        let gts = &mp.b - &mp.a * (&mmat * &x0.g + tk * &bk);
        let ftsig = &mp.a * &mmat * &dp_f;
        let gtsig = &mp.a * &mmat * &dp_g;
        let fss = &mp.w - &mp.a * &csp.f;
        let gss = &mp.b - &mp.a * &csp.g;
        let comp = t.ws.complement(mp.m());
        let mut out = Vec::new();
        for &j in &comp {
            let blocking = HalfPlane::new(row(&fss, j), -gss[j], true);
            let base = t.theta.linear_part().intersect(vec![blocking.clone()], Vec::new());
            if polyhedron_feasible(&base, p, self.opts.oracle.eps_region).verdict == Verdict::Empty {
                continue;
            }
            let mut lin = vec![blocking.clone()];
            let mut quad = Vec::new();
            for &i in comp.iter().filter(|&&i| i != j) {
                let qm = row(&ftsig, i) * fts.row(j) - row(&ftsig, j) * fts.row(i);
                let r = row(&fts, j) * gtsig[i] + row(&ftsig, i) * gts[j] - (row(&fts, i) * gtsig[j] + row(&ftsig, j) * gts[i]);
                let s = gts[j] * gtsig[i] - gts[i] * gtsig[j];
                let strict = i < j;
                let qi = QuadIneq::new(qm, r.clone(), s, strict);
                let scale = qi.r.amax().max(qi.s.abs()).max(1.0);
                if qi.q.amax() <= QUAD_ZERO_TOL * scale {
                    lin.push(HalfPlane::new(r, -s, strict));
                } else if self.opts.relax_quadratics {
                    lin.push(relax_quadratic(&qi, &base, p)?);
                } else {
                    quad.push(qi);
                }
            }
            let theta = t.theta.intersect(lin, quad);
            if self.keep(&theta)? {
                out.push(self.add_child(t, j, theta, None, true));
            }
        }
        let theta = t.theta.intersect(self.csp_region(t, csp), Vec::new());
        if self.keep(&theta)? {
            out.push(self.pass_child(t, theta, Some(csp.clone()), Status::Csp));
        }
        Ok(out)
    }

    /// Singular reduced Hessian: parameter-independent ray `d`.
    pub fn mode_b_singular(&self, t: &RegionTuple, d: &DVector<f64>) -> Result<Vec<RegionTuple>> {
        let mp = self.mp;
        let aff = t
            .affine
            .as_ref()
            .ok_or_else(|| Error::Unsupported("singular step from a non-affine iterate".into()))?;
        let sigma = &mp.a * d;
        let cands = self.candidates(t, &sigma, d.norm());
        if cands.is_empty() {
            return Ok(vec![self.pass_child(t, t.theta.clone(), t.affine.clone(), Status::Unbounded)]);
        }
        let fs = &mp.w - &mp.a * &aff.f;
        let gsl = &mp.b - &mp.a * &aff.g;
        let mut out = Vec::new();
        for &j in &cands {
            let lin = self.kl_rows(j, &cands, &sigma, &fs, &gsl);
            let theta = t.theta.intersect(lin, Vec::new());
            if self.keep(&theta)? {
                let fp = &aff.f + d * (fs.row(j) / sigma[j]);
                let gp = &aff.g + d * (gsl[j] / sigma[j]);
                out.push(self.add_child(t, j, theta, Some(AffineMap::new(fp, gp)), false));
            }
        }
        Ok(out)
    }

    /// Adds `A x*(theta) <= b + W theta` to a CSP tuple's region.
    pub fn prune_infeasible_iterates(&self, t: &RegionTuple) -> RegionTuple {
        if !self.opts.prune_infeasible_iterates || t.status != Status::Csp {
            return t.clone();
        }
        let Some(aff) = &t.affine else {
            return t.clone();
        };
        let fa = &self.mp.a * &aff.f - &self.mp.w;
        let ga = &self.mp.b - &self.mp.a * &aff.g;
        let rows: Vec<HalfPlane> = (0..self.mp.m())
            .filter(|i| !t.ws.contains(*i))
            .map(|i| HalfPlane::new(row(&fa, i), ga[i], false))
            .collect();
        let mut out = t.clone();
        out.theta = t.theta.intersect(rows, Vec::new());
        out
    }
}

/// Canonical order: by change log, then status.
fn canonical_sort(regions: &mut [RegionTuple]) {
    regions.sort_by(|a, b| {
        a.change_codes()
            .cmp(&b.change_codes())
            .then(a.status.code().cmp(&b.status.code()))
    });
}

fn run_stack(ctx: &CertContext, max_k: usize) -> Result<Vec<RegionTuple>> {
    let mut done = Vec::new();
    let mut wave = vec![ctx.initial_tuple()];
    while !wave.is_empty() {
        if let Some(t) = wave.iter().find(|t| t.k >= max_k) {
            let _ = t;
            return Err(Error::IterationCap(max_k));
        }
        let results: Vec<Result<Vec<RegionTuple>>> = if ctx.opts.workers > 1 {
            wave.par_iter().map(|t| ctx.process(t)).collect()
        } else {
            wave.iter().map(|t| ctx.process(t)).collect()
        };
        let mut next = Vec::new();
        for r in results {
            for c in r? {
                if c.status.is_terminal() {
                    done.push(c);
                } else {
                    next.push(c);
                }
            }
        }
        wave = next;
    }
    canonical_sort(&mut done);
    Ok(done)
}

/// Certifies the method started from `x0(theta) = F0 theta + G0` with working set `w0`.
pub fn certify(mp: &MpQp, w0: &WorkingSet, start: &AffineMap, opts: &CertOptions) -> Result<Partition> {
    let t0 = Instant::now();
    let ctx = CertContext::new(mp, w0.clone(), start.clone(), opts)?;
    let max_k = opts.max_k.unwrap_or(4 * mp.m()).max(1);
    let regions = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| run_stack(&ctx, max_k))?
    } else {
        run_stack(&ctx, max_k)?
    };
    let mut options = opts.recorded();
    options.push(("max_k".into(), max_k.to_string()));
    Ok(Partition {
        regions,
        meta: PartitionMeta {
            label: opts.label.clone(),
            n: mp.n(),
            m: mp.m(),
            p: mp.p(),
            problem_hash: crate::io::problem_hash(mp),
            options,
            theta0: mp.theta0.clone(),
            w0: w0.clone(),
            wall_time: t0.elapsed().as_secs_f64(),
        },
    })
}
