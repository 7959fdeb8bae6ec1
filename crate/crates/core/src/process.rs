//! The jump process generated by `−H = −M⁻¹Ã` on the support dofs.
//!
//! From dof `i` the process waits an exponential time with rate
//! `q_i = Ã_ii / m_i`, then jumps to `j` with probability `−Ã_ij / Ã_ii` or
//! is killed with the remaining probability. Gap vertices never appear as
//! states: crossing the gap is a single instantaneous jump.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::io::fmt_real;
use crate::measure::MassMatrix;
use crate::operator::SchurOperator;
use crate::sparse::pairwise_sum;

/// Relative size below which positive off-diagonals of Ã are treated as
/// solver noise and clipped.
pub const CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Ctmc {
    rates: Vec<f64>,
    /// Per state: targets with positive probability, ascending.
    targets: Vec<Vec<usize>>,
    probs: Vec<Vec<f64>>,
    /// Running sums of `probs`, for sampling.
    cumulative: Vec<Vec<f64>>,
    killing: Vec<f64>,
    clipped: usize,
}

impl Ctmc {
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Exit rate `q_i`.
    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    pub fn killing(&self, i: usize) -> f64 {
        self.killing[i]
    }

    pub fn jump_probability(&self, i: usize, j: usize) -> f64 {
        match self.targets[i].binary_search(&j) {
            Ok(k) => self.probs[i][k],
            Err(_) => 0.0,
        }
    }

    /// `(j, p_ij)` for all targets of `i` with positive probability.
    pub fn jumps(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.targets[i].iter().copied().zip(self.probs[i].iter().copied())
    }

    /// Number of positive off-diagonal entries clipped to zero.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    /// Sub-generator `Q = diag(q)(P − Id)`; killing shows up as row-sum deficit.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            q[(i, i)] = -self.rates[i];
            for (j, p) in self.jumps(i) {
                q[(i, j)] += self.rates[i] * p;
            }
        }
        q
    }

    /// Builds a chain directly from rates, jump rows and killing
    /// probabilities. Rows are renormalized so that jumps and killing sum
    /// to one.
    pub fn from_parts(rates: Vec<f64>, rows: Vec<Vec<(usize, f64)>>, killing: Vec<f64>) -> Result<Self> {
        let n = rates.len();
        if rows.len() != n || killing.len() != n {
            return Err(Error::InvalidArgument("inconsistent chain dimensions".into()));
        }
        let mut chain = Ctmc {
            rates: Vec::with_capacity(n),
            targets: Vec::with_capacity(n),
            probs: Vec::with_capacity(n),
            cumulative: Vec::with_capacity(n),
            killing: Vec::with_capacity(n),
            clipped: 0,
        };
        for ((rate, mut row), kill) in rates.into_iter().zip(rows).zip(killing) {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidArgument(format!("exit rate {rate} must be positive")));
            }
            row.retain(|&(_, p)| p > 0.0);
            row.sort_by_key(|&(j, _)| j);
            let total: f64 = row.iter().map(|&(_, p)| p).sum::<f64>() + kill.max(0.0);
            let (targets, probs): (Vec<usize>, Vec<f64>) = row.into_iter().map(|(j, p)| (j, p / total)).unzip();
            let mut acc = 0.0;
            let cumulative = probs
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            chain.killing.push((1.0 - acc).max(0.0));
            chain.rates.push(rate);
            chain.targets.push(targets);
            chain.probs.push(probs);
            chain.cumulative.push(cumulative);
        }
        Ok(chain)
    }
}

/// Rates and jump law from the dense Ã and the lumped μ-mass.
pub fn build_ctmc(op: &SchurOperator, mass: &MassMatrix) -> Result<Ctmc> {
    match op.dense() {
        Some(d) => ctmc_from_dense(&d.matrix, mass.lumped()),
        None => ctmc_from_dense(&op.assemble_dense_schur()?.matrix, mass.lumped()),
    }
}

/// Chain from a dense symmetric form matrix and lumped masses.
pub fn ctmc_from_dense(a: &DMatrix<f64>, lumped: &[f64]) -> Result<Ctmc> {
    let n = a.nrows();
    if a.ncols() != n || lumped.len() != n {
        return Err(Error::InvalidArgument("form and mass dimensions differ".into()));
    }
    let tol = CLIP_TOL * a.amax();
    let mut clipped = 0;
    let mut rates = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut killing = Vec::with_capacity(n);
    for i in 0..n {
        let diag = a[(i, i)];
        if !(diag > 0.0) {
            return Err(Error::NonMarkovianDiscretization {
                row: i,
                col: i,
                value: diag,
            });
        }
        let mut row = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            let v = a[(i, j)];
            if v > tol {
                return Err(Error::NonMarkovianDiscretization {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if v > 0.0 {
                clipped += 1;
            } else if v < 0.0 {
                row.push((j, -v / diag));
            }
        }
        let sum: f64 = row.iter().map(|&(_, p)| p).sum();
        rates.push(diag / lumped[i]);
        killing.push((1.0 - sum).max(0.0));
        rows.push(row);
    }
    let mut chain = Ctmc::from_parts(rates, rows, killing)?;
    chain.clipped = clipped;
    if clipped > 0 {
        log::info!("ctmc clipped {clipped} noise-level positive off-diagonals");
    }
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Alive,
    Killed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    /// Visited support dofs, starting with the initial one.
    pub states: Vec<usize>,
    /// Completed holding times; one per state except the last state of a
    /// path still alive at `t_max`.
    pub holding_times: Vec<f64>,
    pub status: PathStatus,
    /// `t_max` for surviving paths, the killing time otherwise.
    pub clock: f64,
}

impl PathSample {
    /// State occupied at time `t`, or `None` if the path was killed by then.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        let mut clock = 0.0;
        for (k, &s) in self.states.iter().enumerate() {
            match self.holding_times.get(k) {
                Some(&h) if clock + h <= t => clock += h,
                Some(_) => return Some(s),
                None => return (self.status == PathStatus::Alive).then_some(s),
            }
        }
        None
    }
}

/// Random stream for path `index`: ChaCha keyed by the seed, one stream per
/// path, so results do not depend on scheduling.
fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn simulate(ctmc: &Ctmc, start: usize, t_max: f64, rng: &mut ChaCha8Rng) -> PathSample {
    let mut states = vec![start];
    let mut holding_times = Vec::new();
    let mut clock = 0.0;
    let mut current = start;
    loop {
        let hold = Exp::new(ctmc.rates[current])
            .expect("positive rate")
            .sample(rng);
        if clock + hold > t_max {
            return PathSample {
                states,
                holding_times,
                status: PathStatus::Alive,
                clock: t_max,
            };
        }
        clock += hold;
        holding_times.push(hold);
        let u: f64 = rng.random();
        let cum = &ctmc.cumulative[current];
        let k = cum.partition_point(|&c| c <= u);
        if k == cum.len() {
            return PathSample {
                states,
                holding_times,
                status: PathStatus::Killed,
                clock,
            };
        }
        current = ctmc.targets[current][k];
        states.push(current);
    }
}

pub fn sample_path(ctmc: &Ctmc, start: usize, t_max: f64, seed: u64) -> PathSample {
    sample_path_indexed(ctmc, start, t_max, seed, 0)
}

/// Path number `index` of the ensemble used by [`estimate_many`] with the
/// same seed.
pub fn sample_path_indexed(ctmc: &Ctmc, start: usize, t_max: f64, seed: u64, index: u64) -> PathSample {
    assert!(start < ctmc.len(), "start dof out of range");
    simulate(ctmc, start, t_max.max(0.0), &mut path_rng(seed, index))
}

/// `step,dof,x,y,hold_time`; `points` are the support dof coordinates. The
/// hold time is empty for a state still occupied at the horizon.
pub fn path_csv(path: &PathSample, points: &[Point]) -> String {
    let mut out = String::from("step,dof,x,y,hold_time\n");
    for (k, &s) in path.states.iter().enumerate() {
        let hold = path.holding_times.get(k).map_or(String::new(), |&h| fmt_real(h));
        let _ = writeln!(out, "{k},{s},{},{},{hold}", fmt_real(points[s].x), fmt_real(points[s].y));
    }
    out
}

/// `start,t,mean,stderr,n_paths,seed`.
pub fn estimates_csv(estimates: &[McEstimate]) -> String {
    let mut out = String::from("start,t,mean,stderr,n_paths,seed\n");
    for e in estimates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.start,
            fmt_real(e.t),
            fmt_real(e.mean),
            fmt_real(e.stderr),
            e.n_paths,
            e.seed
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub start: usize,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Estimates `E[f_k(X_t) 1{alive at t}]` for every field and time from one
/// set of `n_paths` paths. Result is indexed `[field][time]`.
pub fn estimate_many(
    ctmc: &Ctmc,
    fields: &[&[f64]],
    start: usize,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<McEstimate>>> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    if start >= ctmc.len() {
        return Err(Error::InvalidArgument(format!("start dof {start} out of range")));
    }
    for f in fields {
        if f.len() != ctmc.len() {
            return Err(Error::InvalidArgument("field length does not match the chain".into()));
        }
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    // Per path: occupied state (or None) at each requested time.
    let occupancy: Vec<Vec<Option<usize>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = simulate(ctmc, start, t_max, &mut path_rng(seed, p));
            times.iter().map(|&t| path.state_at(t)).collect()
        })
        .collect();

    Ok(fields
        .iter()
        .map(|f| {
            times
                .iter()
                .enumerate()
                .map(|(ti, &t)| {
                    if t <= 0.0 {
                        return McEstimate {
                            start,
                            t,
                            mean: f[start],
                            stderr: 0.0,
                            n_paths,
                            seed,
                        };
                    }
                    let values: Vec<f64> = occupancy
                        .iter()
                        .map(|occ| occ[ti].map_or(0.0, |s| f[s]))
                        .collect();
                    let n = n_paths as f64;
                    let mean = pairwise_sum(&values) / n;
                    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
                    let stderr = if n_paths > 1 {
                        (pairwise_sum(&sq) / (n - 1.0)).sqrt() / n.sqrt()
                    } else {
                        0.0
                    };
                    McEstimate {
                        start,
                        t,
                        mean,
                        stderr,
                        n_paths,
                        seed,
                    }
                })
                .collect()
        })
        .collect())
}

/// Monte Carlo estimate of `E[f(X_t) 1{alive at t}]`; killed paths count 0.
pub fn estimate_expectation(
    ctmc: &Ctmc,
    f: &[f64],
    start: usize,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(estimate_many(ctmc, &[f], start, &[t], n_paths, seed)?[0][0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rect, SupportSpec};
    use crate::operator::SolverSettings;
    use crate::problem::Discretization;

    fn full(n: usize) -> Discretization {
        let mut d = Discretization::build(
            Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            SupportSpec::FullDomain,
            n,
            3,
            SolverSettings::default(),
        )
        .unwrap();
        d.op.cache_dense().unwrap();
        d
    }

    #[test]
    fn interior_dof_without_gap_is_a_random_walk() {
        let d = full(6);
        let c = build_ctmc(&d.op, &d.mass).unwrap();
        let center = d.nearest_dof(crate::Point::new(0.5, 0.5));
        let jumps: Vec<(usize, f64)> = c.jumps(center).collect();
        assert_eq!(jumps.len(), 4);
        assert!(jumps.iter().all(|&(_, p)| p == 0.25));
        assert_eq!(c.killing(center), 0.0);
        let h = d.mesh.h();
        assert!((c.rate(center) - 4.0 / (h * h)).abs() < 1e-9);
        // Next to the boundary a neighbour is missing.
        let corner = d.nearest_dof(crate::Point::new(0.0, 0.0));
        assert!((c.killing(corner) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn generator_matches_minus_h() {
        let d = full(5);
        let c = build_ctmc(&d.op, &d.mass).unwrap();
        let q = c.generator();
        let a = &d.op.dense().unwrap().matrix;
        for i in 0..c.len() {
            for j in 0..c.len() {
                let h = a[(i, j)] / d.mass.lumped()[i];
                assert!((q[(i, j)] + h).abs() <= 1e-9 * h.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_horizon_path() {
        let d = full(4);
        let c = build_ctmc(&d.op, &d.mass).unwrap();
        let p = sample_path(&c, 2, 0.0, 1);
        assert_eq!(p.states, vec![2]);
        assert!(p.holding_times.is_empty());
        assert_eq!(p.status, PathStatus::Alive);
    }

    #[test]
    fn certain_killing_after_one_hold() {
        let c = Ctmc::from_parts(vec![2.0, 3.0], vec![vec![], vec![]], vec![1.0, 1.0]).unwrap();
        for seed in 0..20 {
            let p = sample_path(&c, 1, 1e6, seed);
            assert_eq!(p.states, vec![1]);
            assert_eq!(p.holding_times.len(), 1);
            assert!(p.holding_times[0] > 0.0);
            assert_eq!(p.status, PathStatus::Killed);
            assert_eq!(p.clock, p.holding_times[0]);
            assert_eq!(p.state_at(p.clock * 0.5), Some(1));
            assert_eq!(p.state_at(p.clock * 2.0), None);
        }
    }

    #[test]
    fn paths_are_reproducible() {
        let d = full(6);
        let c = build_ctmc(&d.op, &d.mass).unwrap();
        let a = sample_path(&c, 7, 0.5, 42);
        assert_eq!(a, sample_path(&c, 7, 0.5, 42));
        assert_ne!(a, sample_path(&c, 7, 0.5, 43));
        assert!(a.holding_times.iter().all(|&h| h > 0.0));
    }

    #[test]
    fn indexed_paths_match_the_ensemble() {
        let d = full(6);
        let c = build_ctmc(&d.op, &d.mass).unwrap();
        let f: Vec<f64> = vec![1.0; c.len()];
        let n = 5;
        let est = estimate_expectation(&c, &f, 7, 0.05, n, 3).unwrap();
        let alive = (0..n as u64)
            .filter(|&p| sample_path_indexed(&c, 7, 0.05, 3, p).state_at(0.05).is_some())
            .count();
        assert_eq!(est.mean, alive as f64 / n as f64);
        assert_eq!(sample_path(&c, 7, 0.05, 3), sample_path_indexed(&c, 7, 0.05, 3, 0));
    }

    #[test]
    fn csv_exports() {
        let c = Ctmc::from_parts(vec![1.0], vec![vec![]], vec![1.0]).unwrap();
        let p = sample_path(&c, 0, 1e9, 0);
        let text = path_csv(&p, &[Point::new(0.5, 0.25)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,dof,x,y,hold_time");
        assert!(lines[1].starts_with("0,0,5.0000000000000000e-1,2.5000000000000000e-1,"));
        let alive = sample_path(&c, 0, 0.0, 0);
        assert!(path_csv(&alive, &[Point::new(0.5, 0.25)]).ends_with(",\n"));
        let e = McEstimate {
            start: 1,
            t: 0.5,
            mean: 0.25,
            stderr: 0.0,
            n_paths: 10,
            seed: 4,
        };
        assert_eq!(
            estimates_csv(&[e]),
            "start,t,mean,stderr,n_paths,seed\n1,5.0000000000000000e-1,2.5000000000000000e-1,0.0000000000000000e0,10,4\n"
        );
    }

    #[test]
    fn zero_time_estimate_is_exact() {
        let d = full(4);
        let c = build_ctmc(&d.op, &d.mass).unwrap();
        let f: Vec<f64> = (0..c.len()).map(|i| 0.1 * i as f64 + 0.1).collect();
        let e = estimate_expectation(&c, &f, 3, 0.0, 100, 9).unwrap();
        assert_eq!((e.mean, e.stderr), (f[3], 0.0));
        assert!(estimate_expectation(&c, &f, 3, 0.1, 0, 9).is_err());
    }

    #[test]
    fn positive_off_diagonal_is_rejected() {
        let d = full(3);
        let mut a = d.op.dense().unwrap().matrix.clone();
        let scale = a.amax();
        a[(0, 1)] = 1e-13 * scale;
        a[(1, 0)] = 1e-13 * scale;
        let c = ctmc_from_dense(&a, d.mass.lumped()).unwrap();
        assert_eq!(c.clipped(), 2);
        assert_eq!(c.jump_probability(0, 1), 0.0);
        a[(0, 1)] = 0.5;
        a[(1, 0)] = 0.5;
        assert!(matches!(
            ctmc_from_dense(&a, d.mass.lumped()),
            Err(Error::NonMarkovianDiscretization { row: 0, col: 1, .. })
        ));
    }
}
