//! Emptiness and geometry queries on parameter regions.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp::{maximize, LpOutcome};
use crate::model::{min_eigenvalue, HalfPlane, QuadIneq, Region};

pub const DEFAULT_EPS_REGION: f64 = 1e-9;
pub const WITNESS_SEED: u64 = 0x5EED;
/// Caps the Chebyshev radius so that unbounded regions still give a finite LP.
const RADIUS_CAP: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Empty,
    Nonempty,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityVerdict {
    pub verdict: Verdict,
    pub witness: Option<DVector<f64>>,
    pub radius: Option<f64>,
}

impl FeasibilityVerdict {
    fn empty() -> Self {
        FeasibilityVerdict {
            verdict: Verdict::Empty,
            witness: None,
            radius: None,
        }
    }

    fn unknown() -> Self {
        FeasibilityVerdict {
            verdict: Verdict::Unknown,
            witness: None,
            radius: None,
        }
    }

    pub fn keep(&self) -> bool {
        self.verdict != Verdict::Empty
    }
}

/// Optional exact oracle run as a child process, one query per invocation.
#[derive(Clone, Debug)]
pub struct ExternalOracle {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalOracle {
    pub fn query(&self, r: &Region, p: usize) -> Result<FeasibilityVerdict> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin.write_all(encode_query(r, p).as_bytes())?;
        }
        let mut out = String::new();
        child.stdout.take().expect("piped stdout").read_to_string(&mut out)?;
        child.wait()?;
        parse_response(out.lines().next().unwrap_or(""), p)
    }
}

pub fn encode_query(r: &Region, p: usize) -> String {
    let mut s = format!("QREGION {} {} {}\n", p, r.linear.len(), r.quadratic.len());
    let row = |v: &mut String, it: &mut dyn Iterator<Item = f64>| {
        let parts: Vec<String> = it.map(|x| format!("{x:e}")).collect();
        v.push_str(&parts.join(" "));
    };
    for h in &r.linear {
        row(&mut s, &mut h.c.iter().copied().chain(std::iter::once(h.d)));
        s.push_str(&format!(" {}\n", u8::from(h.strict)));
    }
    for q in &r.quadratic {
        for i in 0..p {
            row(&mut s, &mut q.q.row(i).iter().copied());
            s.push('\n');
        }
        row(&mut s, &mut q.r.iter().copied());
        s.push('\n');
        s.push_str(&format!("{:e} {}\n", q.s, u8::from(q.strict)));
    }
    s
}

pub fn parse_response(line: &str, p: usize) -> Result<FeasibilityVerdict> {
    let mut tok = line.split_whitespace();
    match tok.next() {
        Some("EMPTY") => Ok(FeasibilityVerdict::empty()),
        Some("UNKNOWN") => Ok(FeasibilityVerdict::unknown()),
        Some("NONEMPTY") => {
            let w: std::result::Result<Vec<f64>, _> = tok.map(str::parse::<f64>).collect();
            let w = w.map_err(|e| Error::Oracle(format!("bad witness: {e}")))?;
            if w.len() != p {
                return Err(Error::Oracle(format!("witness has {} entries, expected {p}", w.len())));
            }
            Ok(FeasibilityVerdict {
                verdict: Verdict::Nonempty,
                witness: Some(DVector::from_vec(w)),
                radius: None,
            })
        }
        _ => Err(Error::Oracle(format!("unrecognized response {line:?}"))),
    }
}

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub eps_region: f64,
    pub samples: usize,
    pub seed: u64,
    pub external: Option<ExternalOracle>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            eps_region: DEFAULT_EPS_REGION,
            samples: 128,
            seed: WITNESS_SEED,
            external: None,
        }
    }
}

/// Chebyshev-center test on the closure of the linear part.
pub fn polyhedron_feasible(r: &Region, p: usize, eps_region: f64) -> FeasibilityVerdict {
    let mut g = Vec::with_capacity(r.linear.len() + 1);
    let mut h = Vec::with_capacity(r.linear.len() + 1);
    for hp in &r.linear {
        if hp.is_constant() {
            let ok = if hp.strict { hp.d > eps_region } else { hp.d >= -eps_region };
            if !ok {
                return FeasibilityVerdict::empty();
            }
            continue;
        }
        let mut row: Vec<f64> = hp.c.iter().copied().collect();
        row.push(hp.c.norm());
        g.push(row);
        h.push(hp.d);
    }
    let mut cap = vec![0.0; p + 1];
    cap[p] = 1.0;
    g.push(cap);
    h.push(RADIUS_CAP);
    let mut c = vec![0.0; p + 1];
    c[p] = 1.0;
    match maximize(&c, &g, &h) {
        LpOutcome::Optimal { y, value } => {
            let witness = DVector::from_vec(y[..p].to_vec());
            if value > eps_region {
                FeasibilityVerdict {
                    verdict: Verdict::Nonempty,
                    witness: Some(witness),
                    radius: Some(value),
                }
            } else {
                FeasibilityVerdict {
                    verdict: Verdict::Empty,
                    witness: None,
                    radius: Some(value),
                }
            }
        }
        LpOutcome::Infeasible => FeasibilityVerdict::empty(),
        LpOutcome::Unbounded | LpOutcome::IterationLimit => FeasibilityVerdict::unknown(),
    }
}

/// Smallest scaled slack over all inequalities; positive means strictly inside.
fn margin(r: &Region, theta: &DVector<f64>) -> f64 {
    let lin = r.linear.iter().map(|h| -h.value(theta));
    let quad = r
        .quadratic
        .iter()
        .map(|q| -q.value(theta) / q.gradient(theta).norm().max(1.0));
    lin.chain(quad).fold(f64::INFINITY, f64::min)
}

/// Per-coordinate bounds of the linear part via `2p` LPs.
pub fn bounding_box(r: &Region, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Vec::new();
    let mut h = Vec::new();
    for hp in r.linear.iter().filter(|h| !h.is_constant()) {
        g.push(hp.c.iter().copied().collect::<Vec<f64>>());
        h.push(hp.d);
    }
    let mut lo = vec![0.0; p];
    let mut hi = vec![0.0; p];
    for i in 0..p {
        for (sign, out) in [(1.0, &mut hi), (-1.0, &mut lo)] {
            let mut c = vec![0.0; p];
            c[i] = sign;
            match maximize(&c, &g, &h) {
                LpOutcome::Optimal { value, .. } => out[i] = sign * value,
                LpOutcome::Unbounded => {
                    return Err(Error::UnboundedRegion(format!("coordinate {} is unbounded", i + 1)))
                }
                LpOutcome::Infeasible => return Err(Error::Lp("region is empty".into())),
                LpOutcome::IterationLimit => return Err(Error::Lp("pivot cap reached".into())),
            }
        }
    }
    Ok((lo, hi))
}

/// Three-valued test for regions that may carry quadratic inequalities.
pub fn quad_region_feasible(r: &Region, p: usize, cfg: &OracleConfig) -> FeasibilityVerdict {
    let lin = polyhedron_feasible(r, p, cfg.eps_region);
    if r.quadratic.is_empty() || lin.verdict == Verdict::Empty {
        return lin;
    }
    let mut cands: Vec<DVector<f64>> = Vec::new();
    if let Some(w) = &lin.witness {
        cands.push(w.clone());
    }
    let bbox = bounding_box(r, p).ok();
    if let Some((lo, hi)) = &bbox {
        if p <= 10 {
            for mask in 0..(1usize << p) {
                cands.push(DVector::from_fn(p, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.samples {
            cands.push(DVector::from_fn(p, |i, _| {
                if hi[i] > lo[i] {
                    rng.gen_range(lo[i]..hi[i])
                } else {
                    lo[i]
                }
            }));
        }
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for c in cands {
        let mg = margin(r, &c);
        if best.as_ref().map_or(true, |(b, _)| mg > *b) {
            best = Some((mg, c));
        }
    }
    let Some((mut mg, mut x)) = best else {
        return FeasibilityVerdict::unknown();
    };
    // pattern search on the margin starting from the best sample
    let mut step = match &bbox {
        Some((lo, hi)) => lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max) / 4.0,
        None => lin.radius.unwrap_or(1.0),
    };
    let mut iters = 0;
    while mg <= cfg.eps_region && step > 1e-10 && iters < 2000 {
        iters += 1;
        let mut improved = false;
        for i in 0..p {
            for sgn in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sgn * step;
                let my = margin(r, &y);
                if my > mg {
                    mg = my;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    if mg > 0.0 && r.contains_unchecked(&x) {
        return FeasibilityVerdict {
            verdict: Verdict::Nonempty,
            witness: Some(x),
            radius: None,
        };
    }
    if let Some((lo, hi)) = &bbox {
        if prove_empty(r, p, lo, hi, cfg.eps_region) {
            return FeasibilityVerdict::empty();
        }
    }
    FeasibilityVerdict::unknown()
}

/// Boxes examined before [`prove_empty`] gives up.
const PROOF_NODE_CAP: usize = 20_000;

/// Lower bound of `q` over the linear part of `r` intersected with `[lo, hi]`,
/// or `None` when that intersection is empty.
fn box_lower_bound(q: &QuadIneq, g: &[Vec<f64>], h: &[f64], lo: &[f64], hi: &[f64], lmin: f64) -> Option<f64> {
    let p = lo.len();
    let c = DVector::from_fn(p, |i, _| 0.5 * (lo[i] + hi[i]));
    let grad = q.gradient(&c);
    // q(c + d) = q(c) + grad.d + d'Qd; bound grad.d by an LP in d, d'Qd by lmin
    let mut gg = g.to_vec();
    let mut hh: Vec<f64> = g.iter().zip(h).map(|(row, d)| d - row.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>()).collect();
    for i in 0..p {
        let half = 0.5 * (hi[i] - lo[i]);
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        gg.push(e.clone());
        hh.push(half);
        e[i] = -1.0;
        gg.push(e);
        hh.push(half);
    }
    let obj: Vec<f64> = grad.iter().map(|v| -v).collect();
    let lin = match maximize(&obj, &gg, &hh) {
        LpOutcome::Optimal { value, .. } => -value,
        LpOutcome::Infeasible => return None,
        _ => return Some(f64::NEG_INFINITY),
    };
    let rem = if lmin >= 0.0 {
        0.0
    } else {
        lmin * (0..p).map(|i| (0.5 * (hi[i] - lo[i])).powi(2)).sum::<f64>()
    };
    Some(q.value(&c) + lin + rem)
}

/// Branch and bound over `[lo, hi]`: true when every box either misses the
/// linear part or has a quadratic whose lower bound (scaled like the search
/// margin) is at least `-tol`, i.e. no point has margin above `tol`.
fn prove_empty(r: &Region, p: usize, lo: &[f64], hi: &[f64], tol: f64) -> bool {
    let lin: Vec<&HalfPlane> = r.linear.iter().filter(|h| !h.is_constant()).collect();
    let g: Vec<Vec<f64>> = lin.iter().map(|h| h.c.iter().copied().collect()).collect();
    let h: Vec<f64> = lin.iter().map(|h| h.d).collect();
    let lmins: Vec<f64> = r.quadratic.iter().map(|q| min_eigenvalue(&q.q)).collect();
    let mut stack = vec![(lo.to_vec(), hi.to_vec())];
    let mut nodes = 0;
    while let Some((blo, bhi)) = stack.pop() {
        nodes += 1;
        if nodes > PROOF_NODE_CAP {
            return false;
        }
        let c = DVector::from_fn(p, |i, _| 0.5 * (blo[i] + bhi[i]));
        let mut closed = false;
        for (q, &lmin) in r.quadratic.iter().zip(&lmins) {
            match box_lower_bound(q, &g, &h, &blo, &bhi, lmin) {
                None => {
                    closed = true;
                    break;
                }
                Some(lb) if lb >= -tol * q.gradient(&c).norm().max(1.0) => {
                    closed = true;
                    break;
                }
                _ => {}
            }
        }
        if closed {
            continue;
        }
        if margin(r, &c) > tol {
            return false;
        }
        let (k, width) = (0..p)
            .map(|i| (i, bhi[i] - blo[i]))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if width <= 0.0 {
            return false;
        }
        let mid = 0.5 * (blo[k] + bhi[k]);
        let (mut hi1, mut lo2) = (bhi.clone(), blo.clone());
        hi1[k] = mid;
        lo2[k] = mid;
        stack.push((blo.clone(), hi1));
        stack.push((lo2, bhi));
    }
    true
}

/// Full policy: exact polyhedral test, sampling for quadratic regions, then the
/// external oracle (if configured) for anything still undecided.
pub fn region_feasible(r: &Region, p: usize, cfg: &OracleConfig) -> Result<FeasibilityVerdict> {
    let v = quad_region_feasible(r, p, cfg);
    if v.verdict == Verdict::Unknown {
        if let Some(ext) = &cfg.external {
            return ext.query(r, p);
        }
    }
    Ok(v)
}

/// Certified lower bound on `min theta'Q theta` over the linear part of `r`.
pub fn min_quad_lower_bound(q: &DMatrix<f64>, r: &Region, p: usize) -> Result<f64> {
    if q.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let (lo, hi) = bounding_box(r, p)?;
    let lmin = min_eigenvalue(q);
    if lmin >= 0.0 {
        let dist2: f64 = (0..p)
            .map(|i| {
                let c = 0.0f64.clamp(lo[i], hi[i]);
                c * c
            })
            .sum();
        Ok(lmin * dist2)
    } else {
        let far2: f64 = (0..p).map(|i| lo[i].powi(2).max(hi[i].powi(2))).sum();
        Ok(lmin * far2)
    }
}

/// Half-plane outer approximation of `theta'Q theta + R theta + S < 0` over `base`.
pub fn relax_quadratic(q: &crate::model::QuadIneq, base: &Region, p: usize) -> Result<HalfPlane> {
    let l = min_quad_lower_bound(&q.q, base, p)?;
    Ok(HalfPlane::new(q.r.clone(), -q.s - l, q.strict))
}
