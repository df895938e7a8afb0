//! Bisection calibration of the deliberate non-compliance probability
//! against a target exported non-compliance rate.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DeliberateProbability, ScenarioConfig};
use crate::error::{CalibrationError, RunError};
use crate::metrics::tally_compliance;
use crate::world::simulate;

/// Replication seeds shared by every iterate (common random numbers).
#[derive(Debug, Clone)]
pub struct RunBudget {
    pub seeds: Vec<u64>,
    pub max_iterations: usize,
}

impl RunBudget {
    pub fn new(seeds: Vec<u64>) -> Self {
        RunBudget {
            seeds,
            max_iterations: 12,
        }
    }
}

/// Mean non-compliant fractions across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredRates {
    pub overall: f64,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Iterate {
    pub p: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub p_deliberate: f64,
    pub measured_rate: f64,
    /// Rate measured with `p_deliberate = 0`: forced non-compliance only.
    pub floor: f64,
    pub iterates: Vec<Iterate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideCalibrationResult {
    pub p_near: f64,
    pub p_far: f64,
    pub measured: MeasuredRates,
    pub floor: MeasuredRates,
    pub rounds: usize,
}

const RATE_TOL: f64 = 0.01;
const BRACKET_TOL: f64 = 0.01;

/// Runs every seed of `budget` with `p` and averages the per-run fractions.
/// Runs without any decided episode are skipped for the side they lack.
pub fn measure_rates(
    cfg: &ScenarioConfig,
    p: &DeliberateProbability,
    seeds: &[u64],
) -> Result<MeasuredRates, RunError> {
    if seeds.is_empty() {
        return Err(CalibrationError::NoSeeds.into());
    }
    let runs: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            c.p_deliberate = p.clone();
            simulate(&c).map(|log| tally_compliance(&log.episodes))
        })
        .collect::<Result<_, _>>()?;
    let mean = |f: &dyn Fn(&crate::metrics::ComplianceTable) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().filter_map(f).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(MeasuredRates {
        overall: mean(&|t| t.nc_fraction()),
        near: mean(&|t| t.near.nc_fraction()),
        far: mean(&|t| t.far.nc_fraction()),
    })
}

/// Bisection on `[0, 1]` for a non-decreasing `measure`. Stops once the
/// bracket is narrower than 0.01 or a midpoint lands within one percentage
/// point of `target`.
fn bisect(
    target: f64,
    max_iterations: usize,
    mut measure: impl FnMut(f64) -> Result<f64, RunError>,
) -> Result<(f64, f64, Vec<Iterate>), RunError> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterates = Vec::new();
    let mut last = None;
    for _ in 0..max_iterations.max(1) {
        let mid = 0.5 * (lo + hi);
        let rate = measure(mid)?;
        iterates.push(Iterate { p: mid, rate });
        last = Some((mid, rate));
        if (rate - target).abs() <= RATE_TOL {
            break;
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < BRACKET_TOL {
            let mid = 0.5 * (lo + hi);
            let rate = measure(mid)?;
            iterates.push(Iterate { p: mid, rate });
            last = Some((mid, rate));
            break;
        }
    }
    let (p, rate) = last.expect("at least one iterate");
    Ok((p, rate, iterates))
}

fn check_target(target: f64) -> Result<(), CalibrationError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(CalibrationError::TargetOutOfRange(target));
    }
    Ok(())
}

/// Finds a scalar `p_deliberate` whose mean exported non-compliance rate
/// over the budget's seeds matches `target`.
pub fn calibrate_noncompliance(
    target: f64,
    cfg: &ScenarioConfig,
    budget: &RunBudget,
) -> Result<CalibrationResult, RunError> {
    check_target(target)?;
    let floor = measure_rates(cfg, &DeliberateProbability::Scalar(0.0), &budget.seeds)?.overall;
    if target < floor {
        return Err(CalibrationError::InfeasibleTarget { target, floor }.into());
    }
    let (p, rate, iterates) = bisect(target, budget.max_iterations, |p| {
        Ok(measure_rates(cfg, &DeliberateProbability::Scalar(p), &budget.seeds)?.overall)
    })?;
    Ok(CalibrationResult {
        p_deliberate: p,
        measured_rate: rate,
        floor,
        iterates,
    })
}

/// Calibrates separate near- and far-side probabilities by alternating
/// one-dimensional bisections until both sides are within one percentage
/// point or `max_rounds` is spent.
pub fn calibrate_per_side(
    near_target: f64,
    far_target: f64,
    cfg: &ScenarioConfig,
    budget: &RunBudget,
    max_rounds: usize,
) -> Result<SideCalibrationResult, RunError> {
    check_target(near_target)?;
    check_target(far_target)?;
    let floor = measure_rates(cfg, &DeliberateProbability::Scalar(0.0), &budget.seeds)?;
    if near_target < floor.near {
        return Err(CalibrationError::InfeasibleTarget {
            target: near_target,
            floor: floor.near,
        }
        .into());
    }
    if far_target < floor.far {
        return Err(CalibrationError::InfeasibleTarget {
            target: far_target,
            floor: floor.far,
        }
        .into());
    }

    let (mut p_near, mut p_far) = (0.5, 0.5);
    let mut measured = measure_rates(cfg, &DeliberateProbability::per_side(p_near, p_far), &budget.seeds)?;
    let mut rounds = 0;
    while rounds < max_rounds.max(1) {
        let near_ok = (measured.near - near_target).abs() <= RATE_TOL;
        let far_ok = (measured.far - far_target).abs() <= RATE_TOL;
        if near_ok && far_ok {
            break;
        }
        rounds += 1;
        if !near_ok {
            p_near = bisect(near_target, budget.max_iterations, |p| {
                Ok(measure_rates(cfg, &DeliberateProbability::per_side(p, p_far), &budget.seeds)?.near)
            })?
            .0;
        }
        if !far_ok {
            p_far = bisect(far_target, budget.max_iterations, |p| {
                Ok(measure_rates(cfg, &DeliberateProbability::per_side(p_near, p), &budget.seeds)?.far)
            })?
            .0;
        }
        measured = measure_rates(cfg, &DeliberateProbability::per_side(p_near, p_far), &budget.seeds)?;
    }
    Ok(SideCalibrationResult {
        p_near,
        p_far,
        measured,
        floor,
        rounds,
    })
}
