//! Floor-field cellular automaton for pedestrians, with gap acceptance
//! toward approaching cars.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::GeometryError;
use crate::geometry::{CellKind, Geometry, Sidewalk};
use crate::vehicle::{time_to_arrival, CarAgent, CarState};
use crate::world::{PedId, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PedPhase {
    Approaching,
    WaitingAtCurb,
    Crossing,
    Cleared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianAgent {
    pub id: PedId,
    pub cell: (usize, usize),
    pub phase: PedPhase,
    pub entry_side: Sidewalk,
    pub desired_speed: f64,
    /// Seconds spent held by gap acceptance.
    pub wait_time: f64,
    pub spawn_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapDecision {
    Go,
    Wait,
}

/// Distance-to-goal potential over the grid. Non-walkable cells hold +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorField {
    pub rows: usize,
    pub cols: usize,
    values: Vec<f64>,
}

impl FloorField {
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Eight neighbours of a cell with their step cost (1 or √2).
pub fn neighbors(rows: usize, cols: usize, idx: usize) -> impl Iterator<Item = (usize, f64)> {
    let (r, c) = ((idx / cols) as isize, (idx % cols) as isize);
    const STEPS: [(isize, isize); 8] = [
        (-1, 0),
        (1, 0),
        (0, -1),
        (0, 1),
        (-1, -1),
        (-1, 1),
        (1, -1),
        (1, 1),
    ];
    STEPS.into_iter().filter_map(move |(dr, dc)| {
        let (nr, nc) = (r + dr, c + dc);
        if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
            return None;
        }
        let cost = if dr != 0 && dc != 0 {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        Some((nr as usize * cols + nc as usize, cost))
    })
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Shortest-path distances (in cells) from every walkable cell to the nearest goal.
pub fn compute_floor_field(
    rows: usize,
    cols: usize,
    walkable: &[bool],
    goals: &[usize],
) -> Result<FloorField, GeometryError> {
    if walkable.len() != rows * cols {
        return Err(GeometryError::MaskSize {
            got: walkable.len(),
            expected: rows * cols,
        });
    }
    let mut values = vec![f64::INFINITY; rows * cols];
    let mut heap = BinaryHeap::new();
    for &g in goals.iter().filter(|&&g| walkable[g]) {
        values[g] = 0.0;
        heap.push(Frontier(0.0, g));
    }
    if heap.is_empty() {
        return Err(GeometryError::NoGoal);
    }
    while let Some(Frontier(d, idx)) = heap.pop() {
        if d > values[idx] {
            continue;
        }
        for (n, cost) in neighbors(rows, cols, idx) {
            if walkable[n] && d + cost < values[n] {
                values[n] = d + cost;
                heap.push(Frontier(d + cost, n));
            }
        }
    }
    if let Some(bad) = (0..rows * cols).find(|&i| walkable[i] && values[i].is_infinite()) {
        return Err(GeometryError::Unreachable {
            row: bad / cols,
            col: bad % cols,
        });
    }
    Ok(FloorField { rows, cols, values })
}

/// Floor field toward the sidewalk opposite `entry`.
pub fn field_for_entry(geometry: &Geometry, entry: Sidewalk) -> Result<FloorField, GeometryError> {
    compute_floor_field(
        geometry.rows,
        geometry.cols,
        &geometry.walkable_mask(),
        &geometry.goal_cells(entry),
    )
}

/// Seconds needed to walk `rows` road rows at the realized CA speed.
pub fn crossing_time_needed(rows: usize, cfg: &ScenarioConfig) -> f64 {
    let p = cfg.ped_move_probability();
    if p <= 0.0 {
        return f64::INFINITY;
    }
    rows as f64 * cfg.time_step / p
}

/// Go/wait decision for a pedestrian about to step into `next_row`.
///
/// Every car in a lane still to be crossed is checked leader first. A car on
/// the zebra forces a wait; a yielding or stopped car shields everything
/// behind it; any other car must arrive later than the crossing time plus the
/// safety margin.
pub fn gap_acceptance(
    ped: &PedestrianAgent,
    next_row: usize,
    geometry: &Geometry,
    cars: &[Vec<CarAgent>],
    cfg: &ScenarioConfig,
) -> GapDecision {
    let lanes = geometry.lanes_ahead(next_row, ped.entry_side);
    let rows = geometry.road_rows_ahead(ped.cell.0, ped.entry_side);
    let needed = crossing_time_needed(rows, cfg) + cfg.safety_margin;
    for lane in lanes {
        let entry = geometry.zebra_entry(lane);
        let exit = geometry.zebra_exit(lane);
        for car in &cars[lane] {
            if car.rear() >= exit {
                continue;
            }
            if car.position > entry {
                return GapDecision::Wait;
            }
            if matches!(car.state, CarState::Yielding | CarState::Stopped) {
                break;
            }
            if time_to_arrival(car, entry - car.position, cfg.accel) <= needed {
                return GapDecision::Wait;
            }
        }
    }
    GapDecision::Go
}

struct Intent {
    ped: PedId,
    target: usize,
}

/// One CA tick for every pedestrian.
pub fn ped_update(world: &mut WorldState, cfg: &ScenarioConfig) {
    let dt = cfg.time_step;
    let now = world.sim_time();
    let p_move = cfg.ped_move_probability();

    let mut order: Vec<PedId> = world.peds.keys().copied().collect();
    order.shuffle(&mut world.rng);

    let mut intents: Vec<Intent> = Vec::new();
    for id in order {
        let ped = world.peds[&id].clone();
        let geometry = &world.geometry;
        let field = &world.fields[ped.entry_side.index()];
        let here = geometry.idx(ped.cell.0, ped.cell.1);
        let here_value = field.value(here);

        let mut best = f64::INFINITY;
        let mut ties: Vec<usize> = Vec::new();
        for (n, _) in neighbors(geometry.rows, geometry.cols, here) {
            if !geometry.is_walkable(n) || world.grid[n].is_some() {
                continue;
            }
            let v = field.value(n);
            if v >= here_value {
                continue;
            }
            if v < best - 1e-12 {
                best = v;
                ties.clear();
                ties.push(n);
            } else if (v - best).abs() <= 1e-12 {
                ties.push(n);
            }
        }

        let waiting = ped.phase == PedPhase::WaitingAtCurb;
        if ties.is_empty() {
            if waiting {
                world.peds.get_mut(&id).unwrap().wait_time += dt;
            }
            continue;
        }
        let target = if ties.len() == 1 {
            ties[0]
        } else {
            ties[world.rng.random_range(0..ties.len())]
        };

        let (tr, _) = geometry.row_col(target);
        let enters_lane = match geometry.lane_of_row(tr) {
            Some(lane) => geometry.lane_of_row(ped.cell.0) != Some(lane),
            None => false,
        };
        if enters_lane {
            let decision = gap_acceptance(&ped, tr, geometry, &world.cars, cfg);
            if decision == GapDecision::Wait {
                let ped = world.peds.get_mut(&id).unwrap();
                if ped.phase == PedPhase::Approaching {
                    ped.phase = PedPhase::WaitingAtCurb;
                }
                ped.wait_time += dt;
                continue;
            }
        } else if waiting {
            world.peds.get_mut(&id).unwrap().wait_time += dt;
        }

        if p_move < 1.0 && world.rng.random::<f64>() >= p_move {
            continue;
        }
        intents.push(Intent { ped: id, target });
    }

    // Conflicts: one uniformly chosen winner per target cell, losers stay.
    let mut by_target: BTreeMap<usize, Vec<PedId>> = BTreeMap::new();
    for intent in intents {
        by_target.entry(intent.target).or_default().push(intent.ped);
    }
    for (target, contenders) in by_target {
        let winner = if contenders.len() == 1 {
            contenders[0]
        } else {
            contenders[world.rng.random_range(0..contenders.len())]
        };
        world.move_pedestrian(winner, target, now);
    }
}

/// True when `kind` is the far sidewalk for a pedestrian from `entry`.
pub fn is_goal(kind: CellKind, entry: Sidewalk) -> bool {
    kind == CellKind::Sidewalk(entry.opposite())
}
