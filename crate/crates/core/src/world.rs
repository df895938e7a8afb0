//! World state, arrivals and the master tick.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::RunError;
use crate::geometry::{Geometry, Sidewalk};
use crate::interaction::{self, CrossingEpisode};
use crate::pedestrian::{self, is_goal, FloorField, PedPhase, PedestrianAgent};
use crate::vehicle::{self, safe_speed, CarAgent, CarState};

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(CarId);
id_type!(PedId);
id_type!(EpisodeId);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub time: f64,
    pub car: CarId,
    pub ped: PedId,
}

/// Append-only event streams consumed by the analytics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventLog {
    /// Times at which a car's rear cleared the zebra.
    pub vehicle_passes: Vec<f64>,
    /// Times at which a pedestrian stepped onto the zebra.
    pub crossing_entries: Vec<f64>,
    /// Wait time of each pedestrian that completed a crossing.
    pub ped_delays: Vec<f64>,
    pub overlaps: Vec<Overlap>,
    pub cars_spawned: u64,
    pub cars_despawned: u64,
    pub peds_spawned: u64,
    pub peds_despawned: u64,
}

pub struct WorldState {
    pub tick: u64,
    pub time_step: f64,
    pub geometry: Geometry,
    /// Floor fields indexed by entry sidewalk.
    pub fields: [FloorField; 2],
    /// At most one pedestrian per cell.
    pub grid: Vec<Option<PedId>>,
    /// Per lane, leader first.
    pub cars: Vec<Vec<CarAgent>>,
    pub peds: BTreeMap<PedId, PedestrianAgent>,
    /// At most one open episode per car.
    pub open_episodes: BTreeMap<CarId, CrossingEpisode>,
    pub episode_log: Vec<CrossingEpisode>,
    pub events: EventLog,
    pub rng: ChaCha8Rng,
    pending_cars: Vec<u64>,
    pending_peds: [u64; 2],
    veh_arrivals: Option<Poisson<f64>>,
    ped_arrivals: [Option<Poisson<f64>>; 2],
    spawn_cells: [Vec<usize>; 2],
    next_car: u64,
    next_ped: u64,
    next_episode: u64,
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    if mean > 0.0 {
        Poisson::new(mean).ok()
    } else {
        None
    }
}

/// Builds an empty world with precomputed geometry tables and floor fields.
pub fn init_world(cfg: &ScenarioConfig) -> Result<WorldState, RunError> {
    cfg.validate()?;
    let geometry = Geometry::new(cfg);
    let fields = [
        pedestrian::field_for_entry(&geometry, Sidewalk::A)?,
        pedestrian::field_for_entry(&geometry, Sidewalk::B)?,
    ];
    let lanes = geometry.total_lanes();
    let dt_min = cfg.time_step / 60.0;
    let veh_mean = cfg.veh_arrival_rate / lanes as f64 * dt_min;
    let ped_a = cfg.ped_arrival_rate * cfg.ped_side_a_share * dt_min;
    let ped_b = cfg.ped_arrival_rate * (1.0 - cfg.ped_side_a_share) * dt_min;
    let spawn_cells = [
        geometry.spawn_cells(Sidewalk::A),
        geometry.spawn_cells(Sidewalk::B),
    ];
    Ok(WorldState {
        tick: 0,
        time_step: cfg.time_step,
        grid: vec![None; geometry.n_cells()],
        cars: vec![Vec::new(); lanes],
        peds: BTreeMap::new(),
        open_episodes: BTreeMap::new(),
        episode_log: Vec::new(),
        events: EventLog::default(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        pending_cars: vec![0; lanes],
        pending_peds: [0; 2],
        veh_arrivals: poisson(veh_mean),
        ped_arrivals: [poisson(ped_a), poisson(ped_b)],
        spawn_cells,
        fields,
        geometry,
        next_car: 0,
        next_ped: 0,
        next_episode: 0,
    })
}

impl WorldState {
    /// Exact: one multiplication, never an accumulated sum.
    pub fn sim_time(&self) -> f64 {
        self.tick as f64 * self.time_step
    }

    pub fn field(&self, entry: Sidewalk) -> &FloorField {
        &self.fields[entry.index()]
    }

    pub fn car(&self, id: CarId) -> Option<&CarAgent> {
        self.cars.iter().flatten().find(|c| c.id == id)
    }

    pub fn car_count(&self) -> usize {
        self.cars.iter().map(Vec::len).sum()
    }

    pub fn pending_arrivals(&self) -> (u64, u64) {
        (
            self.pending_cars.iter().sum(),
            self.pending_peds.iter().sum(),
        )
    }

    pub(crate) fn next_episode_id(&mut self) -> EpisodeId {
        let id = EpisodeId(self.next_episode);
        self.next_episode += 1;
        id
    }

    /// Places a pedestrian on the grid. The cell must be free.
    pub fn insert_pedestrian(&mut self, cell: (usize, usize), entry: Sidewalk, speed: f64) -> PedId {
        let idx = self.geometry.idx(cell.0, cell.1);
        assert!(self.grid[idx].is_none(), "cell {cell:?} already occupied");
        let id = PedId(self.next_ped);
        self.next_ped += 1;
        self.grid[idx] = Some(id);
        let ped = PedestrianAgent {
            id,
            cell,
            phase: PedPhase::Approaching,
            entry_side: entry,
            desired_speed: speed,
            wait_time: 0.0,
            spawn_time: self.sim_time(),
        };
        self.peds.insert(id, ped);
        self.events.peds_spawned += 1;
        id
    }

    /// Puts a car at the given front position of `lane`, keeping the lane sorted.
    pub fn insert_car(&mut self, lane: usize, position: f64, speed: f64, desired: f64, length: f64) -> CarId {
        let id = CarId(self.next_car);
        self.next_car += 1;
        let car = CarAgent {
            id,
            lane,
            position,
            speed,
            desired_speed: desired,
            length,
            state: CarState::Cruising,
            decision: None,
            spawn_time: self.sim_time(),
        };
        let cars = &mut self.cars[lane];
        let at = cars.iter().position(|c| c.position < position).unwrap_or(cars.len());
        cars.insert(at, car);
        self.events.cars_spawned += 1;
        id
    }

    /// Moves a pedestrian into `target`, applying phase transitions and despawn.
    pub(crate) fn move_pedestrian(&mut self, id: PedId, target: usize, now: f64) {
        let g = &self.geometry;
        let ped = self.peds.get_mut(&id).expect("moving a live pedestrian");
        let from = g.idx(ped.cell.0, ped.cell.1);
        debug_assert!(self.grid[target].is_none());
        self.grid[from] = None;
        if is_goal(g.kind(target), ped.entry_side) {
            ped.phase = PedPhase::Cleared;
            let delay = ped.wait_time;
            self.peds.remove(&id);
            self.events.ped_delays.push(delay);
            self.events.peds_despawned += 1;
            return;
        }
        if g.is_zebra(target) && !g.is_zebra(from) {
            ped.phase = PedPhase::Crossing;
            self.events.crossing_entries.push(now);
        }
        ped.cell = g.row_col(target);
        self.grid[target] = Some(id);
    }

    /// Checks the structural invariants; returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let g = &self.geometry;
        let mut seen = vec![false; g.n_cells()];
        for ped in self.peds.values() {
            let idx = g.idx(ped.cell.0, ped.cell.1);
            if seen[idx] {
                return Err(format!("two pedestrians in cell {:?}", ped.cell));
            }
            seen[idx] = true;
            if self.grid[idx] != Some(ped.id) {
                return Err(format!("grid out of sync for pedestrian {}", ped.id));
            }
            if ped.phase == PedPhase::Crossing && !g.is_zebra(idx) {
                return Err(format!("crossing pedestrian {} off the zebra", ped.id));
            }
        }
        if self.grid.iter().filter(|c| c.is_some()).count() != self.peds.len() {
            return Err("grid holds stale pedestrian ids".into());
        }
        for (lane, cars) in self.cars.iter().enumerate() {
            for pair in cars.windows(2) {
                let (leader, follower) = (&pair[0], &pair[1]);
                if follower.position >= leader.rear() {
                    return Err(format!(
                        "lane {lane}: car {} overlaps leader {}",
                        follower.id, leader.id
                    ));
                }
            }
            for car in cars {
                if car.speed < 0.0 || car.speed > car.desired_speed + 1e-9 {
                    return Err(format!("car {} speed {} out of bounds", car.id, car.speed));
                }
                if car.state == CarState::Stopped
                    && (car.speed != 0.0 || car.position > g.stop_line(lane) + 1e-9)
                {
                    return Err(format!("car {} stopped off the stop line envelope", car.id));
                }
                if car.state == CarState::Committed {
                    let ok = self
                        .open_episodes
                        .get(&car.id)
                        .and_then(|e| e.decision)
                        .is_some_and(|d| !d.kind.is_compliant());
                    if !ok {
                        return Err(format!("car {} committed without a non-compliant episode", car.id));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Phase 1: Poisson arrivals; blocked arrivals wait for the next tick.
pub fn spawn_arrivals(world: &mut WorldState, cfg: &ScenarioConfig) {
    let lanes = world.geometry.total_lanes();
    for lane in 0..lanes {
        if let Some(dist) = &world.veh_arrivals {
            world.pending_cars[lane] += dist.sample(&mut world.rng) as u64;
        }
        while world.pending_cars[lane] > 0 {
            let room = world.cars[lane]
                .last()
                .map(|c| c.rear() - cfg.min_gap)
                .unwrap_or(f64::INFINITY);
            if room < 0.0 {
                break;
            }
            let spec = cfg.desired_speed_veh;
            let desired = if spec.spread > 0.0 {
                world
                    .rng
                    .random_range(spec.mean - spec.spread..=spec.mean + spec.spread)
            } else {
                spec.mean
            };
            let speed = desired.min(safe_speed(room, cfg.decel_max));
            world.insert_car(lane, 0.0, speed, desired, cfg.vehicle_length);
            world.pending_cars[lane] -= 1;
        }
    }
    for side in [Sidewalk::A, Sidewalk::B] {
        let s = side.index();
        if let Some(dist) = &world.ped_arrivals[s] {
            world.pending_peds[s] += dist.sample(&mut world.rng) as u64;
        }
        while world.pending_peds[s] > 0 {
            let cells = &world.spawn_cells[s];
            let cell = cells[world.rng.random_range(0..cells.len())];
            if world.grid[cell].is_some() {
                break;
            }
            let rc = world.geometry.row_col(cell);
            world.insert_pedestrian(rc, side, cfg.desired_speed_ped);
            world.pending_peds[s] -= 1;
        }
    }
}

/// Advances the world by exactly one tick.
pub fn step(world: &mut WorldState, cfg: &ScenarioConfig) {
    spawn_arrivals(world, cfg);
    interaction::detection_phase(world, cfg);
    interaction::decision_phase(world, cfg);
    pedestrian::ped_update(world, cfg);
    vehicle::vehicle_update(world, cfg);
    interaction::closure_phase(world, cfg);
    world.tick += 1;
    debug_assert_eq!(world.check_invariants(), Ok(()));
}

/// Everything a finished replication leaves behind.
#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub seed: u64,
    pub duration_min: u32,
    pub ticks: u64,
    pub episodes: Vec<CrossingEpisode>,
    pub events: EventLog,
    pub ttc_threshold: f64,
}

impl RunLog {
    pub fn duration_s(&self) -> f64 {
        self.duration_min as f64 * 60.0
    }
}

/// Closes whatever is still open at the end of the horizon.
pub fn finish(mut world: WorldState, cfg: &ScenarioConfig) -> RunLog {
    let now = world.sim_time();
    let open = std::mem::take(&mut world.open_episodes);
    for (_, mut ep) in open {
        ep.end_time = Some(now.max(ep.start_time));
        world.episode_log.push(ep);
    }
    world.episode_log.sort_by_key(|e| e.episode_id);
    RunLog {
        seed: cfg.seed,
        duration_min: cfg.duration,
        ticks: world.tick,
        episodes: world.episode_log,
        events: world.events,
        ttc_threshold: cfg.ttc_threshold,
    }
}

/// Runs one replication for the configured duration.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunLog, RunError> {
    let mut world = init_world(cfg)?;
    for _ in 0..cfg.ticks() {
        step(&mut world, cfg);
    }
    Ok(finish(world, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_world_is_empty() {
        let cfg = ScenarioConfig {
            seed: 7,
            ..Default::default()
        };
        let w = init_world(&cfg).unwrap();
        assert_eq!(w.tick, 0);
        assert_eq!(w.car_count(), 0);
        assert!(w.peds.is_empty());
        assert_eq!(w.sim_time(), 0.0);
    }

    #[test]
    fn invalid_config_rejected_at_init() {
        let cfg = ScenarioConfig {
            crosswalk_position: 200.0,
            road_length: 100.0,
            ..Default::default()
        };
        assert!(matches!(init_world(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn zero_demand_only_advances_the_clock() {
        let cfg = ScenarioConfig {
            veh_arrival_rate: 0.0,
            ped_arrival_rate: 0.0,
            ..Default::default()
        };
        let mut w = init_world(&cfg).unwrap();
        for _ in 0..500 {
            step(&mut w, &cfg);
        }
        assert_eq!(w.tick, 500);
        assert_eq!(w.car_count(), 0);
        assert!(w.peds.is_empty());
        assert!(w.episode_log.is_empty());
        assert_eq!(w.sim_time(), 500.0 * 0.3);
    }

    #[test]
    fn clock_is_exact_product() {
        let cfg = ScenarioConfig::default();
        let mut w = init_world(&cfg).unwrap();
        w.tick = 14_600;
        assert_eq!(w.sim_time(), 14_600f64 * 0.3);
    }

    #[test]
    fn lone_car_cruises() {
        let cfg = ScenarioConfig {
            veh_arrival_rate: 0.0,
            ped_arrival_rate: 0.0,
            ..Default::default()
        };
        let mut w = init_world(&cfg).unwrap();
        w.insert_car(0, 47.0, 10.0, 10.0, 4.0);
        step(&mut w, &cfg);
        let car = &w.cars[0][0];
        assert!((car.position - 50.0).abs() < 1e-12);
        assert_eq!(car.speed, 10.0);
    }
}
