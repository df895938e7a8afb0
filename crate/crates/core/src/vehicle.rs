//! Longitudinal vehicle dynamics in continuous lanes.

use serde::Serialize;
use thiserror::Error;

use crate::config::{ResumePolicy, ScenarioConfig};
use crate::geometry::{Geometry, Sidewalk};
use crate::interaction::ComplianceDecision;
use crate::pedestrian::{PedPhase, PedestrianAgent};
use crate::world::{CarId, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CarState {
    Cruising,
    Yielding,
    Stopped,
    Committed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarAgent {
    pub id: CarId,
    pub lane: usize,
    /// Front bumper, lane-local metres.
    pub position: f64,
    pub speed: f64,
    pub desired_speed: f64,
    pub length: f64,
    pub state: CarState,
    pub decision: Option<ComplianceDecision>,
    pub spawn_time: f64,
}

impl CarAgent {
    pub fn rear(&self) -> f64 {
        self.position - self.length
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("deceleration must be positive (got {0})")]
pub struct NonPositiveDecel(pub f64);

pub fn braking_distance(speed: f64, decel: f64) -> Result<f64, NonPositiveDecel> {
    if !(decel > 0.0) {
        return Err(NonPositiveDecel(decel));
    }
    Ok(speed * speed / (2.0 * decel))
}

/// Largest speed from which `decel` stops the car within `gap`.
pub fn safe_speed(gap: f64, decel: f64) -> f64 {
    (2.0 * decel * gap.max(0.0)).sqrt()
}

/// Largest next-tick speed `w` such that, after covering `(v + w) / 2 * dt`,
/// the car can still stop within what is left of `gap`.
///
/// On the envelope (`gap == v^2 / 2a`) this is exactly `v - a * dt`.
pub fn safe_speed_next(gap: f64, v: f64, decel: f64, dt: f64) -> f64 {
    let rest = gap - 0.5 * v * dt;
    let half = 0.5 * decel * dt;
    let disc = half * half + 2.0 * decel * rest;
    if disc <= 0.0 {
        return 0.0;
    }
    (disc.sqrt() - half).max(0.0)
}

#[derive(Debug, Clone, Copy)]
pub struct FollowingParams {
    pub accel: f64,
    pub decel: f64,
    pub min_gap: f64,
    pub dt: f64,
}

impl FollowingParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        FollowingParams {
            accel: cfg.accel,
            decel: cfg.decel_max,
            min_gap: cfg.min_gap,
            dt: cfg.time_step,
        }
    }
}

/// Safe-speed update. Returns `(speed, position)` for the next tick.
///
/// The car never passes `stop_target` and never closes within `min_gap` of
/// the leader's rear; hitting either bound ends the tick at that bound.
pub fn car_following_update(
    car: &CarAgent,
    leader: Option<&CarAgent>,
    stop_target: Option<f64>,
    p: &FollowingParams,
) -> (f64, f64) {
    let v = car.speed;
    let mut next = car.desired_speed.min(v + p.accel * p.dt);
    let leader_limit = leader.map(|l| l.rear() - p.min_gap);
    if let Some(limit) = leader_limit {
        next = next.min(safe_speed_next(limit - car.position, v, p.decel, p.dt));
    }
    if let Some(target) = stop_target {
        next = next.min(safe_speed_next(target - car.position, v, p.decel, p.dt));
    }
    next = next.max(0.0);

    let mut position = car.position + 0.5 * (v + next) * p.dt;
    if let Some(target) = stop_target {
        if position >= target {
            position = target.max(car.position);
            next = 0.0;
        }
    }
    if let (Some(limit), Some(l)) = (leader_limit, leader) {
        if position > limit {
            position = limit.max(car.position);
            next = next.min(l.speed);
        }
    }
    (next, position)
}

/// Time for a car to cover `distance`, accelerating at `accel` up to its desired speed.
pub fn time_to_arrival(car: &CarAgent, distance: f64, accel: f64) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    let v = car.speed;
    let vmax = car.desired_speed.max(v);
    if v >= vmax || accel <= 0.0 {
        return if v > 0.0 { distance / v } else { f64::INFINITY };
    }
    let t_ramp = (vmax - v) / accel;
    let d_ramp = v * t_ramp + 0.5 * accel * t_ramp * t_ramp;
    if distance <= d_ramp {
        (-v + (v * v + 2.0 * accel * distance).sqrt()) / accel
    } else {
        t_ramp + (distance - d_ramp) / vmax
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResumeDecision {
    Resume,
    Hold,
}

/// Whether `ped` still has to walk through (or is standing in) `lane`.
pub fn still_to_cross(ped: &PedestrianAgent, lane: usize, geometry: &Geometry) -> bool {
    let mut rows = geometry.lane_rows(lane);
    let Some(lo) = rows.next() else {
        return false;
    };
    let hi = rows.last().unwrap_or(lo);
    match ped.entry_side {
        Sidewalk::A => ped.cell.0 <= hi,
        Sidewalk::B => ped.cell.0 >= lo,
    }
}

/// Whether a pedestrian stands on the zebra inside `lane`.
pub fn on_lane_conflict(ped: &PedestrianAgent, lane: usize, geometry: &Geometry) -> bool {
    let idx = geometry.idx(ped.cell.0, ped.cell.1);
    geometry.is_zebra(idx) && geometry.lane_of_row(ped.cell.0) == Some(lane)
}

/// Exit test for a yielding or stopped car.
///
/// With [`ResumePolicy::OwnLane`] the car holds while any pedestrian in the
/// grey cells is on its lane's conflict cells or has that lane still ahead;
/// pedestrians that already crossed the lane do not matter. With
/// [`ResumePolicy::FullZebra`] every pedestrian in the grey cells holds it.
pub fn resume_check<'a>(
    car: &CarAgent,
    peds: impl IntoIterator<Item = &'a PedestrianAgent>,
    geometry: &Geometry,
    policy: ResumePolicy,
) -> ResumeDecision {
    for ped in peds {
        if ped.phase == PedPhase::Cleared {
            continue;
        }
        let idx = geometry.idx(ped.cell.0, ped.cell.1);
        if !geometry.is_grey(idx) {
            continue;
        }
        let blocks = match policy {
            ResumePolicy::FullZebra => true,
            ResumePolicy::OwnLane => {
                on_lane_conflict(ped, car.lane, geometry) || still_to_cross(ped, car.lane, geometry)
            }
        };
        if blocks {
            return ResumeDecision::Hold;
        }
    }
    ResumeDecision::Resume
}

/// Phase 5: every lane, leader first, so followers see updated leaders.
///
/// Yielding and stopped cars target their stop line. Any car that can still
/// stop also holds short of the zebra while a pedestrian stands in its lane.
pub fn vehicle_update(world: &mut WorldState, cfg: &ScenarioConfig) {
    let now = world.sim_time();
    let params = FollowingParams::from_config(cfg);
    let g = &world.geometry;
    let lanes = g.total_lanes();

    let mut occupied = vec![false; lanes];
    for ped in world.peds.values() {
        if let Some(lane) = g.lane_of_row(ped.cell.0) {
            if g.is_zebra(g.idx(ped.cell.0, ped.cell.1)) {
                occupied[lane] = true;
            }
        }
    }

    for lane in 0..lanes {
        let stop_line = g.stop_line(lane);
        let entry = g.zebra_entry(lane);
        let exit = g.zebra_exit(lane);
        let mut leader: Option<CarAgent> = None;
        for car in world.cars[lane].iter_mut() {
            if matches!(car.state, CarState::Yielding | CarState::Stopped)
                && resume_check(car, world.peds.values(), g, cfg.resume_policy)
                    == ResumeDecision::Resume
            {
                car.state = CarState::Cruising;
                car.decision = None;
            }
            let mut target = match car.state {
                CarState::Yielding | CarState::Stopped => Some(stop_line),
                _ => None,
            };
            if occupied[lane] && car.position < entry {
                let b = braking_distance(car.speed, params.decel).unwrap_or(f64::INFINITY);
                let hold = if stop_line - car.position >= b - 1e-9 {
                    Some(stop_line)
                } else if entry - car.position >= b - 1e-9 {
                    Some(entry)
                } else {
                    None
                };
                target = match (target, hold) {
                    (Some(t), Some(h)) => Some(t.min(h)),
                    (t, h) => t.or(h),
                };
            }
            let (speed, position) = car_following_update(car, leader.as_ref(), target, &params);
            if car.rear() < exit && position - car.length >= exit {
                world.events.vehicle_passes.push(now);
            }
            car.speed = speed;
            car.position = position;
            if car.state == CarState::Yielding && speed == 0.0 {
                car.state = CarState::Stopped;
            } else if car.state == CarState::Stopped && speed > 0.0 {
                car.state = CarState::Yielding;
            }
            leader = Some(car.clone());
        }
        let before = world.cars[lane].len();
        let road_end = g.road_length;
        world.cars[lane].retain(|c| c.rear() <= road_end);
        world.events.cars_despawned += (before - world.cars[lane].len()) as u64;
    }
}
