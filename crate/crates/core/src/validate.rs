//! Monte-Carlo check of a partition against the point solver.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{AffineMap, MpQp, Partition, Region, WorkingSet};
use crate::oracle::bounding_box;
use crate::solver::{solve, SolveStatus, SolverOptions};

pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_SEED: u64 = 42;
/// Samples this close to a boundary of a region whose closure holds them are skipped.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ValidationOptions {
    pub samples: usize,
    pub seed: u64,
    pub boundary_tol: f64,
    /// Exact partitions must cover every sample exactly once; relaxed ones may overlap.
    pub exact: bool,
    pub solver: SolverOptions,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            boundary_tol: BOUNDARY_TOL,
            exact: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub theta: DVector<f64>,
    pub solver_changes: Vec<i64>,
    pub solver_iterations: usize,
    /// `(region id, changes, k)` of every region containing `theta` (ids 1-based).
    pub regions: Vec<(usize, Vec<i64>, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub samples: usize,
    pub checked: usize,
    pub boundary_skipped: usize,
    pub mismatches: Vec<Mismatch>,
    pub iteration_mismatches: Vec<Mismatch>,
    pub uncovered: Vec<DVector<f64>>,
    pub multiply_covered: usize,
    pub sampled_n_max: usize,
    pub certified_n_max: usize,
}

impl ValidationReport {
    pub fn passed(&self, exact: bool) -> bool {
        self.mismatches.is_empty()
            && self.iteration_mismatches.is_empty()
            && self.uncovered.is_empty()
            && (!exact || self.multiply_covered == 0)
            && self.sampled_n_max <= self.certified_n_max
    }

    pub fn summary(&self) -> String {
        format!(
            "samples={} checked={} boundary_skipped={} mismatches={} iteration_mismatches={} uncovered={} multiply_covered={} sampled_N_max={} certified_N_max={}",
            self.samples,
            self.checked,
            self.boundary_skipped,
            self.mismatches.len(),
            self.iteration_mismatches.len(),
            self.uncovered.len(),
            self.multiply_covered,
            self.sampled_n_max,
            self.certified_n_max
        )
    }
}

/// Uniform samples from a bounded polyhedron by rejection from its bounding box.
pub fn sample_region(r: &Region, p: usize, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let (lo, hi) = bounding_box(r, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let cap = count.saturating_mul(1000).max(10_000);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > cap {
            return Err(Error::Invalid(format!("rejection sampling accepted {} of {count} points", out.len())));
        }
        let th = DVector::from_fn(p, |i, _| if hi[i] > lo[i] { rng.gen_range(lo[i]..hi[i]) } else { lo[i] });
        if r.contains_unchecked(&th) {
            out.push(th);
        }
    }
    Ok(out)
}

fn near_boundary(part: &Partition, th: &DVector<f64>, tol: f64) -> bool {
    part.regions
        .iter()
        .any(|r| r.theta.contains_closure(th, tol) && r.theta.boundary_distance(th) < tol)
}

/// Samples `Theta0`, runs the solver from `x0(theta) = F0 theta + G0` and
/// compares working-set sequences and iteration counts with the partition.
pub fn validate(
    mp: &MpQp,
    start: &AffineMap,
    w0: &WorkingSet,
    part: &Partition,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let p = mp.p();
    let mut rep = ValidationReport {
        samples: opts.samples,
        certified_n_max: part.n_max(),
        ..ValidationReport::default()
    };
    for th in sample_region(&mp.theta0, p, opts.samples, opts.seed)? {
        if near_boundary(part, &th, opts.boundary_tol) {
            rep.boundary_skipped += 1;
            continue;
        }
        rep.checked += 1;
        let log = solve(mp, &th, &start.eval(&th), w0, &opts.solver)?;
        if log.status != SolveStatus::MaxIter {
            rep.sampled_n_max = rep.sampled_n_max.max(log.iterations);
        }
        let changes = log.change_codes();
        let hits: Vec<(usize, Vec<i64>, usize)> = part
            .regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.theta.contains_unchecked(&th))
            .map(|(i, r)| (i + 1, r.change_codes(), r.k))
            .collect();
        if hits.is_empty() {
            rep.uncovered.push(th);
            continue;
        }
        if hits.len() > 1 {
            rep.multiply_covered += 1;
        }
        let mismatch = || Mismatch {
            theta: th.clone(),
            solver_changes: changes.clone(),
            solver_iterations: log.iterations,
            regions: hits.clone(),
        };
        let matching: Vec<&(usize, Vec<i64>, usize)> = hits.iter().filter(|h| h.1 == changes).collect();
        let sequence_ok = if opts.exact {
            hits.len() == 1 && hits[0].1 == changes
        } else {
            !matching.is_empty()
        };
        if !sequence_ok {
            rep.mismatches.push(mismatch());
        } else if !matching.iter().any(|h| h.2 == log.iterations) {
            rep.iteration_mismatches.push(mismatch());
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::{certify, CertOptions};
    use nalgebra::DMatrix;

    fn slack_problem() -> MpQp {
        // min 0.5|x|^2 - theta x subject to x <= 10 on theta in [0, 1]
        MpQp::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 10.0),
            DMatrix::zeros(1, 1),
            Region::boxed(&[0.0], &[1.0]),
        )
        .unwrap()
    }

    #[test]
    fn samples_stay_inside() {
        let r = Region::boxed(&[0.0, -1.0], &[2.0, 1.0]);
        let pts = sample_region(&r, 2, 500, 7).unwrap();
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|t| r.contains_unchecked(t)));
        assert_eq!(pts, sample_region(&r, 2, 500, 7).unwrap());
    }

    #[test]
    fn trivial_partition_validates() {
        let mp = slack_problem();
        let start = AffineMap::zeros(1, 1);
        let part = certify(&mp, &WorkingSet::empty(), &start, &CertOptions::default()).unwrap();
        let rep = validate(&mp, &start, &WorkingSet::empty(), &part, &ValidationOptions::default()).unwrap();
        assert!(rep.passed(true), "{}", rep.summary());
        assert_eq!(rep.sampled_n_max, 1);
    }

    #[test]
    fn wrong_partition_is_reported() {
        let mp = slack_problem();
        let start = AffineMap::zeros(1, 1);
        let mut part = certify(&mp, &WorkingSet::empty(), &start, &CertOptions::default()).unwrap();
        part.regions[0].k = 2;
        let rep = validate(&mp, &start, &WorkingSet::empty(), &part, &ValidationOptions::default()).unwrap();
        assert_eq!(rep.iteration_mismatches.len(), rep.checked);
        part.regions[0].theta = Region::boxed(&[0.0], &[0.5]);
        let rep = validate(&mp, &start, &WorkingSet::empty(), &part, &ValidationOptions::default()).unwrap();
        assert!(!rep.uncovered.is_empty());
        assert!(!rep.passed(true));
    }
}
