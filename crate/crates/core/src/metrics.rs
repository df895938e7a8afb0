//! Observational measures computed from run logs: per-minute aggregates,
//! compliance tallies, TTC, throughput and Level of Service.

use serde::Serialize;

use crate::error::DataError;
use crate::geometry::Geometry;
use crate::interaction::{CrossingEpisode, Side};
use crate::pedestrian::{PedPhase, PedestrianAgent};
use crate::vehicle::{on_lane_conflict, CarAgent};
use crate::world::RunLog;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinuteRecord {
    pub minute_index: u32,
    pub n_vehicles: u32,
    pub n_crossing_peds: u32,
    pub n_episodes: u32,
    /// Percentage of this minute's decided episodes that were non-compliant.
    pub pct_noncompliant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SideRow {
    pub compliant: u64,
    pub noncompliant: u64,
    pub pct_compliant: Option<f64>,
    pub pct_noncompliant: Option<f64>,
}

impl SideRow {
    fn new(compliant: u64, noncompliant: u64) -> Self {
        let total = compliant + noncompliant;
        let pct = |n: u64| (total > 0).then(|| round2(100.0 * n as f64 / total as f64));
        SideRow {
            compliant,
            noncompliant,
            pct_compliant: pct(compliant),
            pct_noncompliant: pct(noncompliant),
        }
    }

    pub fn total(&self) -> u64 {
        self.compliant + self.noncompliant
    }

    /// Unrounded non-compliant fraction.
    pub fn nc_fraction(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.noncompliant as f64 / t as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ComplianceTable {
    pub near: SideRow,
    pub far: SideRow,
    pub total_episodes: u64,
    pub pct_noncompliant_overall: Option<f64>,
}

impl ComplianceTable {
    pub fn from_counts(near: (u64, u64), far: (u64, u64)) -> Self {
        let near = SideRow::new(near.0, near.1);
        let far = SideRow::new(far.0, far.1);
        let total = near.total() + far.total();
        let nc = near.noncompliant + far.noncompliant;
        ComplianceTable {
            near,
            far,
            total_episodes: total,
            pct_noncompliant_overall: (total > 0).then(|| round2(100.0 * nc as f64 / total as f64)),
        }
    }

    pub fn nc_fraction(&self) -> Option<f64> {
        (self.total_episodes > 0).then(|| {
            (self.near.noncompliant + self.far.noncompliant) as f64 / self.total_episodes as f64
        })
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Counts decided episodes by side and exported binary compliance.
pub fn tally_compliance<'a>(episodes: impl IntoIterator<Item = &'a CrossingEpisode>) -> ComplianceTable {
    let mut counts = [[0u64; 2]; 2];
    for ep in episodes {
        let Some(compliant) = ep.is_compliant() else {
            continue;
        };
        let s = match ep.side {
            Side::Near => 0,
            Side::Far => 1,
        };
        counts[s][usize::from(!compliant)] += 1;
    }
    ComplianceTable::from_counts((counts[0][0], counts[0][1]), (counts[1][0], counts[1][1]))
}

fn minute_of(t: f64, minutes: u32) -> Result<usize, DataError> {
    let limit = minutes as f64 * 60.0;
    if !(0.0..limit).contains(&t) {
        return Err(DataError::OutOfRange { time: t, limit });
    }
    Ok((t / 60.0).floor() as usize)
}

/// One record per whole minute; episodes count in the minute they were decided.
pub fn aggregate_minutes(log: &RunLog) -> Result<Vec<MinuteRecord>, DataError> {
    aggregate_minute_streams(
        &log.events.vehicle_passes,
        &log.events.crossing_entries,
        &log.episodes,
        log.duration_min,
    )
}

pub fn aggregate_minute_streams(
    vehicle_passes: &[f64],
    crossing_entries: &[f64],
    episodes: &[CrossingEpisode],
    minutes: u32,
) -> Result<Vec<MinuteRecord>, DataError> {
    let n = minutes as usize;
    let mut veh = vec![0u32; n];
    let mut peds = vec![0u32; n];
    let mut eps = vec![0u32; n];
    let mut nc = vec![0u32; n];
    for &t in vehicle_passes {
        veh[minute_of(t, minutes)?] += 1;
    }
    for &t in crossing_entries {
        peds[minute_of(t, minutes)?] += 1;
    }
    for ep in episodes {
        let Some(compliant) = ep.is_compliant() else {
            continue;
        };
        let m = minute_of(ep.start_time, minutes)?;
        eps[m] += 1;
        if !compliant {
            nc[m] += 1;
        }
    }
    Ok((0..n)
        .map(|m| MinuteRecord {
            minute_index: m as u32,
            n_vehicles: veh[m],
            n_crossing_peds: peds[m],
            n_episodes: eps[m],
            pct_noncompliant: (eps[m] > 0).then(|| 100.0 * nc[m] as f64 / eps[m] as f64),
        })
        .collect())
}

/// Time for the car's front to reach the pedestrian's cell in its lane.
/// `None` when the car is not moving, the pedestrian is not crossing in the
/// car's lane, or the car has already passed the cell.
pub fn compute_ttc(car: &CarAgent, ped: &PedestrianAgent, geometry: &Geometry) -> Option<f64> {
    if ped.phase != PedPhase::Crossing || !on_lane_conflict(ped, car.lane, geometry) {
        return None;
    }
    if car.speed <= 0.0 {
        return None;
    }
    let (lo, hi) = geometry.column_span(car.lane, ped.cell.1);
    if car.rear() >= hi {
        return None;
    }
    Some((lo - car.position).max(0.0) / car.speed)
}

pub fn is_near_accident(min_ttc: Option<f64>, threshold: f64) -> bool {
    min_ttc.is_some_and(|t| t < threshold)
}

pub fn near_accident_count(episodes: &[CrossingEpisode], threshold: f64) -> usize {
    episodes
        .iter()
        .filter(|e| is_near_accident(e.min_ttc, threshold))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Los {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Los {
    pub fn from_delay(delay: f64, bands: &[f64; 5]) -> Los {
        const GRADES: [Los; 5] = [Los::A, Los::B, Los::C, Los::D, Los::E];
        GRADES
            .iter()
            .zip(bands)
            .find(|(_, &upper)| delay <= upper)
            .map(|(g, _)| *g)
            .unwrap_or(Los::F)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityReport {
    pub throughput_veh_h: f64,
    pub mean_ped_delay_s: Option<f64>,
    pub los: Los,
    pub delay_samples: usize,
    /// True when no pedestrian completed a crossing; LOS then defaults to A.
    pub zero_sample: bool,
}

pub fn capacity_and_los(log: &RunLog, bands: &[f64; 5]) -> CapacityReport {
    capacity_from_streams(
        log.events.vehicle_passes.len(),
        &log.events.ped_delays,
        log.duration_s(),
        bands,
    )
}

pub fn capacity_from_streams(
    vehicles_passed: usize,
    delays: &[f64],
    duration_s: f64,
    bands: &[f64; 5],
) -> CapacityReport {
    let hours = duration_s / 3600.0;
    let throughput = if hours > 0.0 {
        vehicles_passed as f64 / hours
    } else {
        0.0
    };
    let mean = (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64);
    CapacityReport {
        throughput_veh_h: throughput,
        mean_ped_delay_s: mean,
        los: mean.map_or(Los::A, |d| Los::from_delay(d, bands)),
        delay_samples: delays.len(),
        zero_sample: delays.is_empty(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::geometry::Sidewalk;
    use crate::interaction::{ComplianceDecision, DecisionKind, PositionCategory};
    use crate::vehicle::CarState;
    use crate::world::{CarId, EpisodeId, PedId};

    pub(crate) fn episode(side: Side, kind: DecisionKind, t: f64) -> CrossingEpisode {
        CrossingEpisode {
            episode_id: EpisodeId(0),
            car_id: CarId(0),
            lane: 0,
            ped_ids: vec![PedId(0)],
            category: PositionCategory::WaitingAtCurb,
            side,
            decision: Some(ComplianceDecision {
                kind,
                distance_at_decision: 30.0,
                braking_distance_at_decision: 10.0,
                random_draw: None,
            }),
            start_time: t,
            end_time: Some(t + 1.0),
            min_ttc: None,
        }
    }

    fn table1_log() -> Vec<CrossingEpisode> {
        let mut v = Vec::new();
        let mut push = |side, kind, n| {
            for _ in 0..n {
                v.push(episode(side, kind, 0.0));
            }
        };
        push(Side::Near, DecisionKind::Compliant, 191);
        push(Side::Near, DecisionKind::NonCompliantDeliberate, 200);
        push(Side::Near, DecisionKind::NonCompliantForced, 23);
        push(Side::Far, DecisionKind::Compliant, 230);
        push(Side::Far, DecisionKind::NonCompliantForced, 168);
        v
    }

    #[test]
    fn table1_counts_reproduce_reported_rates() {
        let t = tally_compliance(&table1_log());
        assert_eq!(t.total_episodes, 812);
        assert_eq!(t.near.noncompliant, 223);
        assert_eq!(t.pct_noncompliant_overall, Some(48.15));
        assert_eq!(t.near.pct_noncompliant, Some(53.86));
        assert_eq!(t.near.pct_compliant, Some(46.14));
        assert_eq!(t.far.pct_noncompliant, Some(42.21));
        // the far compliant share recomputes to 57.79, not the printed 57.69
        assert_eq!(t.far.pct_compliant, Some(57.79));
    }

    #[test]
    fn single_compliant_and_empty_tallies() {
        let t = tally_compliance(&[episode(Side::Near, DecisionKind::Compliant, 0.0)]);
        assert_eq!(t.pct_noncompliant_overall, Some(0.0));
        let empty = tally_compliance(&[]);
        assert_eq!(empty.total_episodes, 0);
        assert_eq!(empty.pct_noncompliant_overall, None);
        assert_eq!(empty.near.pct_noncompliant, None);
    }

    #[test]
    fn minutes_floor_and_empty() {
        let recs = aggregate_minute_streams(&[], &[], &[], 5).unwrap();
        assert_eq!(recs.len(), 5);
        assert!(recs.iter().all(|r| r.n_vehicles == 0 && r.pct_noncompliant.is_none()));

        let eps = [episode(Side::Near, DecisionKind::NonCompliantForced, 61.0)];
        let recs = aggregate_minute_streams(&[59.9], &[120.0], &eps, 3).unwrap();
        assert_eq!(recs[0].n_vehicles, 1);
        assert_eq!(recs[1].n_episodes, 1);
        assert_eq!(recs[1].pct_noncompliant, Some(100.0));
        assert_eq!(recs[2].n_crossing_peds, 1);

        let err = aggregate_minute_streams(&[180.0], &[], &[], 3).unwrap_err();
        assert!(matches!(err, DataError::OutOfRange { .. }));
    }

    #[test]
    fn los_bands() {
        let bands = [5.0, 10.0, 20.0, 30.0, 45.0];
        assert_eq!(Los::from_delay(3.0, &bands), Los::A);
        assert_eq!(Los::from_delay(5.0, &bands), Los::A);
        assert_eq!(Los::from_delay(15.0, &bands), Los::C);
        assert_eq!(Los::from_delay(47.0, &bands), Los::F);
        let r = capacity_from_streams(60, &[], 3600.0, &bands);
        assert_eq!(r.los, Los::A);
        assert!(r.zero_sample);
        assert_eq!(r.mean_ped_delay_s, None);
        assert_eq!(r.throughput_veh_h, 60.0);
    }

    #[test]
    fn ttc_cases() {
        let g = Geometry::new(&ScenarioConfig::default());
        let ped = PedestrianAgent {
            id: PedId(1),
            cell: (10, 3),
            phase: PedPhase::Crossing,
            entry_side: Sidewalk::A,
            desired_speed: 1.34,
            wait_time: 0.0,
            spawn_time: 0.0,
        };
        let mut car = CarAgent {
            id: CarId(1),
            lane: 0,
            position: g.zebra_entry(0) - 20.0,
            speed: 10.0,
            desired_speed: 14.0,
            length: 4.0,
            state: CarState::Committed,
            decision: None,
            spawn_time: 0.0,
        };
        assert!((compute_ttc(&car, &ped, &g).unwrap() - 2.0).abs() < 1e-9);
        car.speed = 0.0;
        assert_eq!(compute_ttc(&car, &ped, &g), None);
        car.speed = 10.0;
        car.lane = 1;
        assert_eq!(compute_ttc(&car, &ped, &g), None);
        assert!(is_near_accident(Some(1.2), 1.5));
        assert!(!is_near_accident(None, 1.5));
    }
}
