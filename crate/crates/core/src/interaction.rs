//! Perception of pedestrians by cars, crossing-episode bookkeeping,
//! classification, and the compliance decision.

use rand::Rng;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::DecisionAlreadyMade;
use crate::geometry::{Geometry, Sidewalk};
use crate::pedestrian::{PedPhase, PedestrianAgent};
use crate::vehicle::{braking_distance, CarAgent, CarState};
use crate::metrics::compute_ttc;
use crate::world::{CarId, EpisodeId, Overlap, PedId, WorldState};

/// Pedestrian side relative to the car's direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Near,
    Far,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Near => "near",
            Side::Far => "far",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "near" => Some(Side::Near),
            "far" => Some(Side::Far),
            _ => None,
        }
    }
}

/// Ordered by strength of the pedestrian's claim to the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionCategory {
    ApproachingWithinBand,
    WaitingAtCurb,
    OnZebra,
}

impl PositionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PositionCategory::ApproachingWithinBand => "approaching_within_band",
            PositionCategory::WaitingAtCurb => "waiting_at_curb",
            PositionCategory::OnZebra => "on_zebra",
        }
    }

    pub fn parse(s: &str) -> Option<PositionCategory> {
        match s {
            "approaching_within_band" => Some(PositionCategory::ApproachingWithinBand),
            "waiting_at_curb" => Some(PositionCategory::WaitingAtCurb),
            "on_zebra" => Some(PositionCategory::OnZebra),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Compliant,
    NonCompliantForced,
    NonCompliantDeliberate,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Compliant => "compliant",
            DecisionKind::NonCompliantForced => "noncompliant_forced",
            DecisionKind::NonCompliantDeliberate => "noncompliant_deliberate",
        }
    }

    /// Exported binary: forced and deliberate both count as non-compliant.
    pub fn is_compliant(self) -> bool {
        self == DecisionKind::Compliant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplianceDecision {
    pub kind: DecisionKind,
    pub distance_at_decision: f64,
    pub braking_distance_at_decision: f64,
    pub random_draw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEpisode {
    pub episode_id: EpisodeId,
    pub car_id: CarId,
    pub lane: usize,
    pub ped_ids: Vec<PedId>,
    pub category: PositionCategory,
    pub side: Side,
    pub decision: Option<ComplianceDecision>,
    pub start_time: f64,
    pub end_time: Option<f64>,
    /// `None` means the car was never on a collision course (infinite TTC).
    pub min_ttc: Option<f64>,
}

impl CrossingEpisode {
    pub fn is_compliant(&self) -> Option<bool> {
        self.decision.map(|d| d.kind.is_compliant())
    }
}

/// Distance from the car's front to its stop line (negative once past it).
pub fn distance_to_stop_line(car: &CarAgent, geometry: &Geometry) -> f64 {
    geometry.stop_line(car.lane) - car.position
}

/// Whether `car` is the first car of its lane not yet clear of the zebra.
pub fn is_lead_vehicle(car: &CarAgent, lane_cars: &[CarAgent], geometry: &Geometry) -> bool {
    let exit = geometry.zebra_exit(car.lane);
    lane_cars
        .iter()
        .filter(|c| c.position > car.position)
        .all(|c| c.rear() >= exit)
}

/// Pedestrians in the grey cells perceived by `car`, sorted by id.
pub fn detect_relevant_pedestrians(
    car: &CarAgent,
    world: &WorldState,
    cfg: &ScenarioConfig,
) -> Vec<PedId> {
    let g = &world.geometry;
    if car.position >= g.zebra_entry(car.lane) {
        return Vec::new();
    }
    if distance_to_stop_line(car, g) > cfg.perception_range {
        return Vec::new();
    }
    if cfg.lead_vehicle_only && !is_lead_vehicle(car, &world.cars[car.lane], g) {
        return Vec::new();
    }
    world
        .peds
        .values()
        .filter(|p| is_relevant(p, g))
        .map(|p| p.id)
        .collect()
}

pub fn is_relevant(ped: &PedestrianAgent, geometry: &Geometry) -> bool {
    ped.phase != PedPhase::Cleared && geometry.is_grey(geometry.idx(ped.cell.0, ped.cell.1))
}

pub fn classify_pedestrian_position(
    ped: &PedestrianAgent,
    geometry: &Geometry,
) -> Option<PositionCategory> {
    match ped.phase {
        PedPhase::Crossing => Some(PositionCategory::OnZebra),
        PedPhase::WaitingAtCurb => Some(PositionCategory::WaitingAtCurb),
        PedPhase::Approaching => geometry
            .band_side(geometry.idx(ped.cell.0, ped.cell.1))
            .map(|_| PositionCategory::ApproachingWithinBand),
        PedPhase::Cleared => None,
    }
}

pub fn classify_side(entry: Sidewalk, car_lane: usize, geometry: &Geometry) -> Side {
    if geometry.near_sidewalk(car_lane) == entry {
        Side::Near
    } else {
        Side::Far
    }
}

/// Pedestrian whose claim governs the episode: most advanced category, then
/// fewest rows from the car's lane, then lowest id.
pub fn triggering_pedestrian<'a>(
    peds: impl IntoIterator<Item = &'a PedestrianAgent>,
    car_lane: usize,
    geometry: &Geometry,
) -> Option<(&'a PedestrianAgent, PositionCategory)> {
    let lane_rows: Vec<usize> = geometry.lane_rows(car_lane).collect();
    let (lo, hi) = (lane_rows[0], *lane_rows.last().unwrap());
    let row_distance = |row: usize| {
        if row < lo {
            lo - row
        } else {
            row.saturating_sub(hi)
        }
    };
    peds.into_iter()
        .filter_map(|p| classify_pedestrian_position(p, geometry).map(|c| (p, c)))
        .min_by(|(a, ca), (b, cb)| {
            cb.cmp(ca)
                .then(row_distance(a.cell.0).cmp(&row_distance(b.cell.0)))
                .then(a.id.cmp(&b.id))
        })
}

/// Opens an episode for `car` or adds newly perceived pedestrians to its
/// open one. Returns the episode id, or `None` when there is nothing to open.
pub fn open_or_join_episode(
    car_id: CarId,
    ped_ids: &[PedId],
    world: &mut WorldState,
) -> Option<EpisodeId> {
    if let Some(ep) = world.open_episodes.get_mut(&car_id) {
        for id in ped_ids {
            if !ep.ped_ids.contains(id) {
                ep.ped_ids.push(*id);
            }
        }
        return Some(ep.episode_id);
    }
    if ped_ids.is_empty() {
        return None;
    }
    let car = world.car(car_id)?;
    let lane = car.lane;
    let peds: Vec<&PedestrianAgent> = ped_ids.iter().filter_map(|id| world.peds.get(id)).collect();
    let (trigger, category) = triggering_pedestrian(peds, lane, &world.geometry)?;
    let side = classify_side(trigger.entry_side, lane, &world.geometry);
    let episode_id = world.next_episode_id();
    let episode = CrossingEpisode {
        episode_id,
        car_id,
        lane,
        ped_ids: ped_ids.to_vec(),
        category,
        side,
        decision: None,
        start_time: world.sim_time(),
        end_time: None,
        min_ttc: None,
    };
    world.open_episodes.insert(car_id, episode);
    Some(episode_id)
}

/// The braking-distance rule with an injected uniform draw.
///
/// `draw` is only consulted when the car can still stop.
pub fn decide_with_draw(
    distance: f64,
    braking: f64,
    p_deliberate: f64,
    draw: impl FnOnce() -> f64,
) -> ComplianceDecision {
    if distance < braking {
        return ComplianceDecision {
            kind: DecisionKind::NonCompliantForced,
            distance_at_decision: distance,
            braking_distance_at_decision: braking,
            random_draw: None,
        };
    }
    let u = draw();
    let kind = if u < p_deliberate {
        DecisionKind::NonCompliantDeliberate
    } else {
        DecisionKind::Compliant
    };
    ComplianceDecision {
        kind,
        distance_at_decision: distance,
        braking_distance_at_decision: braking,
        random_draw: Some(u),
    }
}

/// One-shot compliance decision for the car's open episode. Updates the car
/// state (Yielding or Committed) and records the decision on both.
pub fn decide_compliance<R: Rng + ?Sized>(
    car: &mut CarAgent,
    episode: &mut CrossingEpisode,
    geometry: &Geometry,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<ComplianceDecision, DecisionAlreadyMade> {
    if episode.decision.is_some() {
        return Err(DecisionAlreadyMade {
            car: car.id.0,
            episode: episode.episode_id.0,
        });
    }
    let d = distance_to_stop_line(car, geometry);
    let b = braking_distance(car.speed, cfg.decel_max).expect("decel_max validated positive");
    let p = cfg.p_deliberate.lookup(episode.side, episode.category);
    let decision = decide_with_draw(d, b, p, || rng.random::<f64>());
    car.state = if decision.kind.is_compliant() {
        CarState::Yielding
    } else {
        CarState::Committed
    };
    car.decision = Some(decision);
    episode.decision = Some(decision);
    Ok(decision)
}

/// Phase 2: perception. Cars without an open episode open one; cars with
/// one add newly perceived pedestrians.
pub fn detection_phase(world: &mut WorldState, cfg: &ScenarioConfig) {
    let mut found: Vec<(CarId, Vec<PedId>)> = Vec::new();
    for lane in &world.cars {
        for car in lane {
            let peds = detect_relevant_pedestrians(car, world, cfg);
            if !peds.is_empty() {
                found.push((car.id, peds));
            }
        }
    }
    for (car, peds) in found {
        open_or_join_episode(car, &peds, world);
    }
}

/// Phase 3: one decision per episode, in lane then position order.
pub fn decision_phase(world: &mut WorldState, cfg: &ScenarioConfig) {
    let g = &world.geometry;
    for lane in world.cars.iter_mut() {
        for car in lane.iter_mut() {
            let Some(ep) = world.open_episodes.get_mut(&car.id) else {
                continue;
            };
            if ep.decision.is_some() {
                continue;
            }
            decide_compliance(car, ep, g, cfg, &mut world.rng)
                .expect("undecided episode checked above");
        }
    }
}

/// Phase 6: refresh membership, sample TTC and pedestrian-vehicle overlaps,
/// then close episodes whose car passed or whose pedestrians are all gone.
pub fn closure_phase(world: &mut WorldState, cfg: &ScenarioConfig) {
    let now = world.sim_time();
    let g = &world.geometry;

    for ped in world.peds.values() {
        let idx = g.idx(ped.cell.0, ped.cell.1);
        let Some(lane) = g.lane_of_row(ped.cell.0) else {
            continue;
        };
        if !g.is_zebra(idx) {
            continue;
        }
        let (lo, hi) = g.column_span(lane, ped.cell.1);
        for car in &world.cars[lane] {
            if car.position > lo && car.rear() < hi {
                world.events.overlaps.push(Overlap {
                    time: now,
                    car: car.id,
                    ped: ped.id,
                });
            }
        }
    }

    let car_ids: Vec<CarId> = world.open_episodes.keys().copied().collect();
    for car_id in car_ids {
        let car = world.car(car_id).cloned();
        let passed = car
            .as_ref()
            .is_none_or(|c| c.rear() >= world.geometry.zebra_exit(c.lane));
        if let Some(car) = car.as_ref().filter(|_| !passed) {
            let peds = detect_relevant_pedestrians(car, world, cfg);
            open_or_join_episode(car_id, &peds, world);
        }
        let ep = world.open_episodes.get_mut(&car_id).expect("listed above");
        if let Some(car) = &car {
            for id in &ep.ped_ids {
                if let Some(ped) = world.peds.get(id) {
                    if let Some(ttc) = compute_ttc(car, ped, &world.geometry) {
                        ep.min_ttc = Some(ep.min_ttc.map_or(ttc, |m| m.min(ttc)));
                    }
                }
            }
        }
        let all_gone = ep.ped_ids.iter().all(|id| !world.peds.contains_key(id));
        if passed || all_gone {
            let mut ep = world.open_episodes.remove(&car_id).unwrap();
            ep.end_time = Some(now);
            world.episode_log.push(ep);
            if let Some(car) = world
                .cars
                .iter_mut()
                .flatten()
                .find(|c| c.id == car_id && c.state == CarState::Committed)
            {
                car.state = CarState::Cruising;
                car.decision = None;
            }
        }
    }
}
