//! Line-oriented text formats for problems and certified partitions.
//!
//! Problem file:
//!
//! ```text
//! # comment
//! dims 3 3 2
//! matrix H 3 3
//! 0.97 0.19 0.15
//! ...
//! vector f 3
//! 0 0 0
//! matrix f_theta 3 2
//! matrix A 3 3
//! vector b 3
//! matrix W 3 2
//! theta0 4            # rows "c_1 .. c_p d strict"
//! start origin        # or "start affine" followed by matrix F0 / vector G0
//! w0 1 3              # 1-based, may be empty
//! option key value
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so writing a parsed
//! canonical file reproduces it byte for byte.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AffineMap, HalfPlane, MpQp, Partition, PartitionMeta, QuadIneq, Region, RegionTuple, Status, WorkingSet, WsChange};

pub const PARTITION_MAGIC: &str = "ascert-partition v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub mp: MpQp,
    pub start: AffineMap,
    pub w0: WorkingSet,
    pub options: Vec<(String, String)>,
}

impl ProblemFile {
    /// Origin start with an empty working set.
    pub fn from_mp(mp: MpQp) -> Self {
        let start = AffineMap::zeros(mp.n(), mp.p());
        ProblemFile {
            mp,
            start,
            w0: WorkingSet::empty(),
            options: Vec::new(),
        }
    }

    pub fn option(&self, key: &str) -> Option<&str> {
        self.options.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn num(x: f64) -> String {
    // normalize -0 so the text form is unique
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

fn join(it: impl Iterator<Item = f64>) -> String {
    it.map(num).collect::<Vec<_>>().join(" ")
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let _ = writeln!(out, "{}", join(m.row(i).iter().copied()));
    }
}

fn write_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    let _ = writeln!(out, "vector {name} {}", v.len());
    let _ = writeln!(out, "{}", join(v.iter().copied()));
}

fn write_half_planes(out: &mut String, hs: &[HalfPlane]) {
    for h in hs {
        let _ = writeln!(out, "{} {} {}", join(h.c.iter().copied()), num(h.d), u8::from(h.strict));
    }
}

fn ws_line(ws: &WorkingSet) -> String {
    ws.indices().iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
}

fn with_tokens(head: &str, rest: &str) -> String {
    if rest.is_empty() {
        head.to_string()
    } else {
        format!("{head} {rest}")
    }
}

/// Data part only (no start, options): the input to the problem hash.
fn write_problem_data(out: &mut String, mp: &MpQp) {
    let _ = writeln!(out, "dims {} {} {}", mp.n(), mp.m(), mp.p());
    write_matrix(out, "H", &mp.h);
    write_vector(out, "f", &mp.f);
    write_matrix(out, "f_theta", &mp.f_theta);
    write_matrix(out, "A", &mp.a);
    write_vector(out, "b", &mp.b);
    write_matrix(out, "W", &mp.w);
    let _ = writeln!(out, "theta0 {}", mp.theta0.linear.len());
    write_half_planes(out, &mp.theta0.linear);
}

pub fn write_problem(pf: &ProblemFile) -> String {
    let mut out = String::new();
    write_problem_data(&mut out, &pf.mp);
    if pf.start.f.iter().all(|v| *v == 0.0) && pf.start.g.iter().all(|v| *v == 0.0) {
        out.push_str("start origin\n");
    } else {
        out.push_str("start affine\n");
        write_matrix(&mut out, "F0", &pf.start.f);
        write_vector(&mut out, "G0", &pf.start.g);
    }
    let _ = writeln!(out, "{}", with_tokens("w0", &ws_line(&pf.w0)));
    for (k, v) in &pf.options {
        let _ = writeln!(out, "option {k} {v}");
    }
    out
}

/// SHA-256 of the canonical problem data, hex encoded.
pub fn problem_hash(mp: &MpQp) -> String {
    let mut s = String::new();
    write_problem_data(&mut s, mp);
    hex::encode(Sha256::digest(s.as_bytes()))
}

struct Lines<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Lines { items, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let it = self.items.get(self.pos).copied();
        self.pos += 1;
        it
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn line_no(&self) -> usize {
        self.items.get(self.pos.saturating_sub(1)).map_or(0, |x| x.0)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line_no(),
            msg: msg.into(),
        }
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| Error::Parse {
            line: self.items.last().map_or(0, |x| x.0),
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn numbers(&mut self, count: usize) -> Result<Vec<f64>> {
        let (line, text) = self.expect("a row of numbers")?;
        let vals: std::result::Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::Parse {
            line,
            msg: format!("bad number: {e}"),
        })?;
        if vals.len() != count {
            return Err(Error::Parse {
                line,
                msg: format!("expected {count} numbers, got {}", vals.len()),
            });
        }
        Ok(vals)
    }

    fn matrix(&mut self, r: usize, c: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            data.extend(self.numbers(c)?);
        }
        Ok(DMatrix::from_row_slice(r, c, &data))
    }

    /// Reads `matrix NAME r c` and checks the name and shape.
    fn named_matrix(&mut self, name: &str, r: usize, c: usize) -> Result<DMatrix<f64>> {
        let (_, head) = self.expect(name)?;
        let t: Vec<&str> = head.split_whitespace().collect();
        if t.len() != 4 || t[0] != "matrix" || t[1] != name {
            return Err(self.err(format!("expected 'matrix {name} {r} {c}', got '{head}'")));
        }
        let (rr, cc) = (self.usize_tok(t[2])?, self.usize_tok(t[3])?);
        if (rr, cc) != (r, c) {
            return Err(self.err(format!("matrix {name} must be {r}x{c}, got {rr}x{cc}")));
        }
        self.matrix(r, c)
    }

    fn named_vector(&mut self, name: &str, len: usize) -> Result<DVector<f64>> {
        let (_, head) = self.expect(name)?;
        let t: Vec<&str> = head.split_whitespace().collect();
        if t.len() != 3 || t[0] != "vector" || t[1] != name {
            return Err(self.err(format!("expected 'vector {name} {len}', got '{head}'")));
        }
        let l = self.usize_tok(t[2])?;
        if l != len {
            return Err(self.err(format!("vector {name} must have length {len}, got {l}")));
        }
        if len == 0 {
            return Ok(DVector::zeros(0));
        }
        Ok(DVector::from_vec(self.numbers(len)?))
    }

    fn usize_tok(&self, s: &str) -> Result<usize> {
        s.parse::<usize>().map_err(|_| self.err(format!("expected a non-negative integer, got '{s}'")))
    }

    /// `KEY v...`; returns the tokens after the key.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (_, text) = self.expect(key)?;
        let mut t = text.split_whitespace();
        if t.next() != Some(key) {
            return Err(self.err(format!("expected '{key}', got '{text}'")));
        }
        Ok(t.collect())
    }

    fn keyed_one(&mut self, key: &str) -> Result<&'a str> {
        let t = self.keyed(key)?;
        if t.len() != 1 {
            return Err(self.err(format!("'{key}' takes one value")));
        }
        Ok(t[0])
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let t = self.keyed_one(key)?;
        self.usize_tok(t)
    }

    fn half_planes(&mut self, count: usize, p: usize) -> Result<Vec<HalfPlane>> {
        (0..count)
            .map(|_| {
                let v = self.numbers(p + 2)?;
                let strict = self.flag(v[p + 1])?;
                Ok(HalfPlane::new(DVector::from_vec(v[..p].to_vec()), v[p], strict))
            })
            .collect()
    }

    fn flag(&self, v: f64) -> Result<bool> {
        match v {
            x if x == 0.0 => Ok(false),
            x if x == 1.0 => Ok(true),
            _ => Err(self.err("strict flag must be 0 or 1")),
        }
    }

    fn one_based(&self, toks: &[&str]) -> Result<WorkingSet> {
        let ix: Result<Vec<usize>> = toks.iter().map(|t| self.usize_tok(t)).collect();
        WorkingSet::from_one_based(&ix?).map_err(|e| self.err(e.to_string()))
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let mut ls = Lines::new(text);
    let dims = ls.keyed("dims")?;
    if dims.len() != 3 {
        return Err(ls.err("dims takes n m p"));
    }
    let (n, m, p) = (ls.usize_tok(dims[0])?, ls.usize_tok(dims[1])?, ls.usize_tok(dims[2])?);
    if n == 0 || p == 0 {
        return Err(ls.err("n and p must be positive"));
    }
    let h = ls.named_matrix("H", n, n)?;
    let f = ls.named_vector("f", n)?;
    let ft = ls.named_matrix("f_theta", n, p)?;
    let a = ls.named_matrix("A", m, n)?;
    let b = ls.named_vector("b", m)?;
    let w = ls.named_matrix("W", m, p)?;
    let nt = ls.keyed_usize("theta0")?;
    let theta0 = Region::new(ls.half_planes(nt, p)?, Vec::new());
    let mp = MpQp::new(h, f, ft, a, b, w, theta0)?;
    let mut start = AffineMap::zeros(n, p);
    let mut w0 = WorkingSet::empty();
    let mut options = Vec::new();
    while let Some((_, text)) = ls.next() {
        let toks: Vec<&str> = text.split_whitespace().collect();
        match toks[0] {
            "start" => match toks.get(1).copied() {
                Some("origin") => start = AffineMap::zeros(n, p),
                Some("affine") => {
                    let f0 = ls.named_matrix("F0", n, p)?;
                    let g0 = ls.named_vector("G0", n)?;
                    start = AffineMap::new(f0, g0);
                }
                _ => return Err(ls.err("start must be 'origin' or 'affine'")),
            },
            "w0" => {
                w0 = ls.one_based(&toks[1..])?;
                if w0.indices().iter().any(|&i| i >= m) {
                    return Err(ls.err(format!("w0 index exceeds m = {m}")));
                }
            }
            "option" => {
                if toks.len() < 3 {
                    return Err(ls.err("option takes a key and a value"));
                }
                options.push((toks[1].to_string(), toks[2..].join(" ")));
            }
            other => return Err(ls.err(format!("unknown section '{other}'"))),
        }
    }
    Ok(ProblemFile { mp, start, w0, options })
}

pub fn write_partition(part: &Partition) -> String {
    let meta = &part.meta;
    let mut out = String::new();
    let _ = writeln!(out, "{PARTITION_MAGIC}");
    let _ = writeln!(out, "{}", with_tokens("label", &meta.label));
    let _ = writeln!(out, "dims {} {} {}", meta.n, meta.m, meta.p);
    let _ = writeln!(out, "problem_hash {}", meta.problem_hash);
    for (k, v) in &meta.options {
        let _ = writeln!(out, "option {k} {v}");
    }
    let _ = writeln!(out, "theta0 {}", meta.theta0.linear.len());
    write_half_planes(&mut out, &meta.theta0.linear);
    let _ = writeln!(out, "{}", with_tokens("w0", &ws_line(&meta.w0)));
    let _ = writeln!(out, "n_max {}", part.n_max());
    let _ = writeln!(out, "n_reg {}", part.n_reg());
    for (id, r) in part.regions.iter().enumerate() {
        let _ = writeln!(out, "region {}", id + 1);
        let _ = writeln!(out, "status {}", r.status.name());
        let _ = writeln!(out, "k {}", r.k);
        let codes: Vec<String> = r.wschanges.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{}", with_tokens("wschanges", &codes.join(" ")));
        let _ = writeln!(out, "flops {}", r.flops);
        let _ = writeln!(out, "{}", with_tokens("ws", &ws_line(&r.ws)));
        let _ = writeln!(out, "last_removed {}", r.last_removed.map_or("none".to_string(), |l| (l + 1).to_string()));
        let _ = writeln!(out, "case2 {}", r.case2);
        let _ = writeln!(out, "linear {}", r.theta.linear.len());
        write_half_planes(&mut out, &r.theta.linear);
        let _ = writeln!(out, "quadratic {}", r.theta.quadratic.len());
        for q in &r.theta.quadratic {
            for i in 0..meta.p {
                let _ = writeln!(out, "{}", join(q.q.row(i).iter().copied()));
            }
            let _ = writeln!(out, "{}", join(q.r.iter().copied()));
            let _ = writeln!(out, "{} {}", num(q.s), u8::from(q.strict));
        }
        match &r.affine {
            None => out.push_str("affine none\n"),
            Some(a) => {
                out.push_str("affine\n");
                for i in 0..meta.n {
                    let _ = writeln!(out, "{}", join(a.f.row(i).iter().copied()));
                }
                let _ = writeln!(out, "{}", join(a.g.iter().copied()));
            }
        }
        out.push_str("end\n");
    }
    out
}

pub fn parse_partition(text: &str) -> Result<Partition> {
    let mut ls = Lines::new(text);
    match ls.next() {
        Some((_, l)) if l == PARTITION_MAGIC => {}
        _ => return Err(ls.err(format!("missing '{PARTITION_MAGIC}' header"))),
    }
    let label = ls.keyed("label")?.join(" ");
    let dims = ls.keyed("dims")?;
    if dims.len() != 3 {
        return Err(ls.err("dims takes n m p"));
    }
    let (n, m, p) = (ls.usize_tok(dims[0])?, ls.usize_tok(dims[1])?, ls.usize_tok(dims[2])?);
    let problem_hash = ls.keyed_one("problem_hash")?.to_string();
    let mut options = Vec::new();
    while let Some((_, t)) = ls.peek() {
        if !t.starts_with("option ") {
            break;
        }
        let toks = ls.keyed("option")?;
        if toks.len() < 2 {
            return Err(ls.err("option takes a key and a value"));
        }
        options.push((toks[0].to_string(), toks[1..].join(" ")));
    }
    let nt = ls.keyed_usize("theta0")?;
    let theta0 = Region::new(ls.half_planes(nt, p)?, Vec::new());
    let w0 = {
        let t = ls.keyed("w0")?;
        ls.one_based(&t)?
    };
    let n_max = ls.keyed_usize("n_max")?;
    let n_reg = ls.keyed_usize("n_reg")?;
    let mut regions = Vec::new();
    while ls.peek().is_some() {
        let id = ls.keyed_usize("region")?;
        if id != regions.len() + 1 {
            return Err(ls.err(format!("region ids must be consecutive, got {id}")));
        }
        let st = ls.keyed_one("status")?;
        let status = Status::from_name(st).ok_or_else(|| ls.err(format!("unknown status '{st}'")))?;
        let k = ls.keyed_usize("k")?;
        let wschanges = ls
            .keyed("wschanges")?
            .iter()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| ls.err(format!("bad change '{t}'")))
                    .and_then(|c| WsChange::from_code(c).map_err(|e| ls.err(e.to_string())))
            })
            .collect::<Result<Vec<_>>>()?;
        let flops = ls
            .keyed_one("flops")?
            .parse::<u64>()
            .map_err(|_| ls.err("bad flop count"))?;
        let ws = {
            let t = ls.keyed("ws")?;
            ls.one_based(&t)?
        };
        let lr = ls.keyed_one("last_removed")?;
        let last_removed = match lr {
            "none" => None,
            s => Some(ls.usize_tok(s)?.checked_sub(1).ok_or_else(|| ls.err("indices are 1-based"))?),
        };
        let case2 = match ls.keyed_one("case2")? {
            "true" => true,
            "false" => false,
            other => return Err(ls.err(format!("case2 must be true or false, got '{other}'"))),
        };
        let nl = ls.keyed_usize("linear")?;
        let linear = ls.half_planes(nl, p)?;
        let nq = ls.keyed_usize("quadratic")?;
        let mut quadratic = Vec::with_capacity(nq);
        for _ in 0..nq {
            let q = ls.matrix(p, p)?;
            let r = DVector::from_vec(ls.numbers(p)?);
            let sv = ls.numbers(2)?;
            let strict = ls.flag(sv[1])?;
            quadratic.push(QuadIneq::new(q, r, sv[0], strict));
        }
        let aff = ls.keyed("affine")?;
        let affine = match aff.as_slice() {
            ["none"] => None,
            [] => {
                let f = ls.matrix(n, p)?;
                let g = DVector::from_vec(ls.numbers(n)?);
                Some(AffineMap::new(f, g))
            }
            _ => return Err(ls.err("affine must be followed by 'none' or nothing")),
        };
        if !ls.keyed("end")?.is_empty() {
            return Err(ls.err("'end' takes no values"));
        }
        regions.push(RegionTuple {
            theta: Region::new(linear, quadratic),
            ws,
            affine,
            status,
            k,
            last_removed,
            case2,
            wschanges,
            flops,
        });
    }
    let part = Partition {
        regions,
        meta: PartitionMeta {
            label,
            n,
            m,
            p,
            problem_hash,
            options,
            theta0,
            w0,
            wall_time: 0.0,
        },
    };
    if part.n_max() != n_max || part.n_reg() != n_reg {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "header says n_max={n_max} n_reg={n_reg}, regions give n_max={} n_reg={}",
                part.n_max(),
                part.n_reg()
            ),
        });
    }
    Ok(part)
}
