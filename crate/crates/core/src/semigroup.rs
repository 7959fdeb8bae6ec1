//! Backward-Euler evolution of `u' = −Hu` and numerical checks of the
//! submarkovian property (positivity and L∞-contractivity).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::MassMatrix;
use crate::operator::SchurOperator;
use crate::solver::{solve_spd, LinearOperator};

/// `M + dt·Ã`, the backward-Euler system operator.
struct ShiftedForm<'a> {
    op: &'a SchurOperator,
    mass: &'a [f64],
    dt: f64,
}

impl LinearOperator for ShiftedForm<'_> {
    fn dim(&self) -> usize {
        self.mass.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let ax = self.op.apply_form(x)?;
        for ((yi, (xi, m)), a) in y.iter_mut().zip(x.iter().zip(self.mass)).zip(&ax) {
            *yi = m * xi + self.dt * a;
        }
        Ok(())
    }

    fn preconditioner(&self) -> Vec<f64> {
        self.op
            .preconditioner()
            .iter()
            .zip(self.mass)
            .map(|(d, m)| m + self.dt * d)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub scheme: &'static str,
}

/// Number of uniform steps covering `[0, t_end]`; the last time is
/// `n·dt ≥ t_end`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    (t_end / dt - 1e-9).ceil().max(0.0) as usize
}

fn check_step_args(t_end: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_end must be nonnegative, got {t_end}"
        )));
    }
    Ok(())
}

/// Runs `n_steps` backward-Euler steps with lumped mass, calling
/// `observe(step, state)` for the initial datum and after every step.
pub fn march<F>(
    op: &SchurOperator,
    mass: &MassMatrix,
    f0: &[f64],
    n_steps: usize,
    dt: f64,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    assert_eq!(f0.len(), op.dim());
    let shifted = ShiftedForm {
        op,
        mass: mass.lumped(),
        dt,
    };
    let max_iter = op.max_iter().max(10 * op.dim() + 500);
    let mut u = f0.to_vec();
    observe(0, &u);
    for step in 1..=n_steps {
        let rhs: Vec<f64> = u.iter().zip(mass.lumped()).map(|(a, m)| a * m).collect();
        u = solve_spd(&shifted, &rhs, op.settings().tol, max_iter)
            .map_err(|e| e.with_context(format!("time step {step}")))?
            .x;
        observe(step, &u);
    }
    Ok(())
}

/// Backward Euler: `(M + dt·Ã) u_{n+1} = M u_n`.
pub fn evolve(
    op: &SchurOperator,
    mass: &MassMatrix,
    f0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<EvolutionResult> {
    check_step_args(t_end, dt)?;
    let n = step_count(t_end, dt);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    march(op, mass, f0, n, dt, |k, u| {
        times.push(k as f64 * dt);
        states.push(u.to_vec());
    })?;
    Ok(EvolutionResult {
        times,
        states,
        dt,
        scheme: "backward-euler",
    })
}

/// Extremes of one evolved field over all time steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldCheck {
    pub trial: usize,
    pub min: f64,
    pub max: f64,
    /// `max(0, −min)`.
    pub positivity_violation: f64,
    /// `max(0, max − 1)`.
    pub contraction_violation: f64,
    /// Largest per-step increase of `⟨u, 1⟩_M` (zero when monotone).
    pub mass_increase: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkovReport {
    pub checks: Vec<FieldCheck>,
}

impl MarkovReport {
    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn worst_positivity(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.positivity_violation))
    }

    pub fn worst_contraction(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.contraction_violation))
    }

    pub fn worst_mass_increase(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.mass_increase))
    }
}

/// Evolves each field for `t_end` and records its extremes.
pub fn check_fields(
    op: &SchurOperator,
    mass: &MassMatrix,
    fields: &[Vec<f64>],
    t_end: f64,
    dt: f64,
) -> Result<MarkovReport> {
    check_step_args(t_end, dt)?;
    let n = step_count(t_end, dt);
    let checks = fields
        .par_iter()
        .enumerate()
        .map(|(trial, f0)| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut prev_mass = f64::INFINITY;
            let mut mass_increase: f64 = 0.0;
            march(op, mass, f0, n, dt, |_, u| {
                for &x in u {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                let m = mass.total_mass(u);
                mass_increase = mass_increase.max(m - prev_mass);
                prev_mass = m;
            })
            .map_err(|e| e.with_context(format!("trial {trial}")))?;
            Ok(FieldCheck {
                trial,
                min: lo,
                max: hi,
                positivity_violation: (-lo).max(0.0),
                contraction_violation: (hi - 1.0).max(0.0),
                mass_increase: mass_increase.max(0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarkovReport { checks })
}

/// Uniform `[0, 1]` field for trial `trial`; the stream is keyed by
/// `seed + trial`.
pub fn random_unit_field(dim: usize, seed: u64, trial: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    (0..dim).map(|_| rng.random_range(0.0..=1.0)).collect()
}

/// Evolves `n_trials` random fields with i.i.d. uniform `[0, 1]` values and
/// reports the worst positivity and contraction violations.
pub fn check_submarkov(
    op: &SchurOperator,
    mass: &MassMatrix,
    n_trials: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<MarkovReport> {
    let fields: Vec<Vec<f64>> = (0..n_trials)
        .map(|t| random_unit_field(op.dim(), seed, t))
        .collect();
    check_fields(op, mass, &fields, t_end, dt)
}
