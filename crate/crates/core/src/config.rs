//! Scenario configuration, validation and the post-rounding config echo.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::interaction::{PositionCategory, Side};

/// Desired-speed distribution for vehicles: uniform on `mean ± spread`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSpec {
    pub mean: f64,
    #[serde(default)]
    pub spread: f64,
}

/// Which pedestrians keep a yielding car at the stop line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResumePolicy {
    /// Resume once the car's own lane is clear of pedestrians still to cross it.
    #[default]
    OwnLane,
    /// Resume only when the whole zebra and both curb bands are empty.
    FullZebra,
}

/// Deliberate non-compliance probability, either a scalar or a table over
/// (side, position category) with fallbacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeliberateProbability {
    Scalar(f64),
    Table(DeliberateTable),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliberateTable {
    pub default: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far: Option<f64>,
    /// Keys are `"<side>.<category>"`, e.g. `"near.on_zebra"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cells: BTreeMap<String, f64>,
}

impl DeliberateProbability {
    pub fn scalar(p: f64) -> Self {
        DeliberateProbability::Scalar(p)
    }

    pub fn per_side(near: f64, far: f64) -> Self {
        DeliberateProbability::Table(DeliberateTable {
            default: (near + far) / 2.0,
            near: Some(near),
            far: Some(far),
            cells: BTreeMap::new(),
        })
    }

    /// Most specific entry wins: cell, then side, then default.
    pub fn lookup(&self, side: Side, category: PositionCategory) -> f64 {
        match self {
            DeliberateProbability::Scalar(p) => *p,
            DeliberateProbability::Table(t) => {
                let key = format!("{}.{}", side.as_str(), category.as_str());
                if let Some(p) = t.cells.get(&key) {
                    return *p;
                }
                let by_side = match side {
                    Side::Near => t.near,
                    Side::Far => t.far,
                };
                by_side.unwrap_or(t.default)
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            DeliberateProbability::Scalar(p) => vec![*p],
            DeliberateProbability::Table(t) => {
                let mut v = vec![t.default];
                v.extend(t.near);
                v.extend(t.far);
                v.extend(t.cells.values().copied());
                v
            }
        }
    }

    fn validate_keys(&self) -> Result<(), ConfigError> {
        if let DeliberateProbability::Table(t) = self {
            for key in t.cells.keys() {
                let ok = key
                    .split_once('.')
                    .map(|(s, c)| Side::parse(s).is_some() && PositionCategory::parse(c).is_some())
                    .unwrap_or(false);
                if !ok {
                    return Err(ConfigError::Invalid(format!(
                        "p_deliberate cell key {key:?} is not <near|far>.<approaching_within_band|waiting_at_curb|on_zebra>"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for DeliberateProbability {
    fn default() -> Self {
        DeliberateProbability::Scalar(0.3)
    }
}

/// Full scenario description. Field names are the scenario-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Lanes per travel direction.
    pub lane_count: usize,
    pub lane_width: f64,
    pub road_length: f64,
    /// Upstream edge of the zebra, measured from the origin of the forward lanes.
    pub crosswalk_position: f64,
    /// Zebra extent along the direction of travel.
    pub crosswalk_width: f64,
    pub curb_band_depth: f64,
    pub cell_size: f64,
    pub time_step: f64,
    /// Simulated minutes.
    pub duration: u32,
    /// Vehicles per minute, all lanes together.
    pub veh_arrival_rate: f64,
    /// Pedestrians per minute, both sidewalks together.
    pub ped_arrival_rate: f64,
    /// Fraction of pedestrian arrivals on side A.
    pub ped_side_a_share: f64,
    pub desired_speed_veh: SpeedSpec,
    pub desired_speed_ped: f64,
    pub decel_max: f64,
    pub accel: f64,
    pub vehicle_length: f64,
    /// Standstill gap kept behind a leader.
    pub min_gap: f64,
    pub p_deliberate: DeliberateProbability,
    pub ttc_threshold: f64,
    /// Extra seconds a pedestrian wants on top of the crossing time.
    pub safety_margin: f64,
    pub perception_range: f64,
    pub stop_line_offset: f64,
    /// Sidewalk depth on each side of the carriageway.
    pub sidewalk_depth: f64,
    /// Sidewalk extent beyond each zebra edge, along the road.
    pub sidewalk_margin: f64,
    pub resume_policy: ResumePolicy,
    /// Only the first car of a lane (nothing between it and the zebra) perceives pedestrians.
    pub lead_vehicle_only: bool,
    /// Upper delay bounds (s) for LOS A..E; above the last is F.
    pub los_bands: [f64; 5],
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            lane_count: 1,
            lane_width: 3.5,
            road_length: 200.0,
            crosswalk_position: 98.0,
            crosswalk_width: 4.0,
            curb_band_depth: 1.5,
            cell_size: 0.4,
            time_step: 0.3,
            duration: 73,
            veh_arrival_rate: 18.89,
            ped_arrival_rate: 8.01,
            ped_side_a_share: 0.5,
            desired_speed_veh: SpeedSpec {
                mean: 13.9,
                spread: 1.5,
            },
            desired_speed_ped: 1.34,
            decel_max: 3.0,
            accel: 2.0,
            vehicle_length: 4.0,
            min_gap: 2.0,
            p_deliberate: DeliberateProbability::default(),
            ttc_threshold: 1.5,
            safety_margin: 1.0,
            perception_range: 100.0,
            stop_line_offset: 1.0,
            sidewalk_depth: 3.2,
            sidewalk_margin: 1.2,
            resume_policy: ResumePolicy::OwnLane,
            lead_vehicle_only: false,
            los_bands: [5.0, 10.0, 20.0, 30.0, 45.0],
            seed: 0,
        }
    }
}

/// Curb band after snapping to whole cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundedBand {
    pub cells: usize,
    pub depth: f64,
}

/// Config as actually simulated, with rounding applied.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    #[serde(flatten)]
    pub config: ScenarioConfig,
    pub curb_band_cells: usize,
    pub curb_band_depth_rounded: f64,
    pub zebra_cells: usize,
    pub sidewalk_cells: usize,
    pub ticks: u64,
}

/// Cells needed to cover `length`, rounding up. A tiny tolerance keeps exact
/// multiples (1.6 / 0.4) from spilling into an extra cell.
pub fn cells_ceil(length: f64, cell: f64) -> usize {
    let ratio = length / cell;
    (ratio - 1e-9).ceil().max(0.0) as usize
}

pub fn cells_round(length: f64, cell: f64) -> usize {
    (length / cell).round() as usize
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| ConfigError::Parse(format!("scenario is not UTF-8: {e}")))?;
        let cfg = Self::from_json_str(text)?;
        Ok((cfg, bytes))
    }

    pub fn curb_band(&self) -> RoundedBand {
        let cells = cells_ceil(self.curb_band_depth, self.cell_size);
        RoundedBand {
            cells,
            depth: cells as f64 * self.cell_size,
        }
    }

    pub fn total_lanes(&self) -> usize {
        2 * self.lane_count
    }

    /// Ticks in the configured duration.
    pub fn ticks(&self) -> u64 {
        (self.duration as f64 * 60.0 / self.time_step).round() as u64
    }

    /// Per-tick probability of a pedestrian advancing one cell. Values at or
    /// above 0.99 are snapped to 1 so nominal walking speed does not dawdle.
    pub fn ped_move_probability(&self) -> f64 {
        let p = (self.desired_speed_ped * self.time_step / self.cell_size).min(1.0);
        if p >= 0.99 {
            1.0
        } else {
            p
        }
    }

    pub fn echo(&self) -> ConfigEcho {
        let band = self.curb_band();
        ConfigEcho {
            config: self.clone(),
            curb_band_cells: band.cells,
            curb_band_depth_rounded: band.depth,
            zebra_cells: cells_round(self.crosswalk_width, self.cell_size).max(1),
            sidewalk_cells: cells_round(self.sidewalk_depth, self.cell_size),
            ticks: self.ticks(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(msg: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid(msg.into()))
        }
        let non_negative = [
            ("lane_width", self.lane_width),
            ("road_length", self.road_length),
            ("crosswalk_position", self.crosswalk_position),
            ("crosswalk_width", self.crosswalk_width),
            ("curb_band_depth", self.curb_band_depth),
            ("veh_arrival_rate", self.veh_arrival_rate),
            ("ped_arrival_rate", self.ped_arrival_rate),
            ("desired_speed_veh.mean", self.desired_speed_veh.mean),
            ("desired_speed_veh.spread", self.desired_speed_veh.spread),
            ("desired_speed_ped", self.desired_speed_ped),
            ("accel", self.accel),
            ("vehicle_length", self.vehicle_length),
            ("min_gap", self.min_gap),
            ("ttc_threshold", self.ttc_threshold),
            ("safety_margin", self.safety_margin),
            ("perception_range", self.perception_range),
            ("stop_line_offset", self.stop_line_offset),
            ("sidewalk_depth", self.sidewalk_depth),
            ("sidewalk_margin", self.sidewalk_margin),
        ];
        for (name, v) in non_negative {
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("{name} must be finite and >= 0 (got {v})"));
            }
        }
        if !(self.time_step > 0.0) || !self.time_step.is_finite() {
            return invalid(format!("time_step must be > 0 (got {})", self.time_step));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return invalid(format!("cell_size must be > 0 (got {})", self.cell_size));
        }
        if !(self.decel_max > 0.0) || !self.decel_max.is_finite() {
            return invalid(format!("decel_max must be > 0 (got {})", self.decel_max));
        }
        if self.lane_count == 0 {
            return invalid("lane_count must be >= 1");
        }
        if self.lane_width <= 0.0 {
            return invalid("lane_width must be > 0");
        }
        if self.crosswalk_width <= 0.0 {
            return invalid("crosswalk_width must be > 0");
        }
        if self.crosswalk_position + self.crosswalk_width > self.road_length {
            return invalid(format!(
                "crosswalk_position + crosswalk_width ({}) must be <= road_length ({})",
                self.crosswalk_position + self.crosswalk_width,
                self.road_length
            ));
        }
        if self.desired_speed_veh.spread > self.desired_speed_veh.mean {
            return invalid("desired_speed_veh.spread must not exceed its mean");
        }
        if !(0.0..=1.0).contains(&self.ped_side_a_share) {
            return invalid("ped_side_a_share must lie in [0,1]");
        }
        for p in self.p_deliberate.values() {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("p_deliberate values must lie in [0,1] (got {p})"));
            }
        }
        self.p_deliberate.validate_keys()?;
        let band = self.curb_band();
        let sidewalk = cells_round(self.sidewalk_depth, self.cell_size);
        if band.cells == 0 {
            return invalid("curb band must cover at least one cell");
        }
        if sidewalk <= band.cells {
            return invalid(format!(
                "sidewalk_depth ({sidewalk} cells) must exceed the rounded curb band ({} cells)",
                band.cells
            ));
        }
        if self.stop_line_offset > self.crosswalk_position
            || self.stop_line_offset > self.road_length - self.crosswalk_position - self.crosswalk_width
        {
            return invalid("stop line must lie on the road for both directions");
        }
        if self.los_bands.windows(2).any(|w| w[0] > w[1]) {
            return invalid("los_bands must be non-decreasing");
        }
        if self.duration == 0 {
            return invalid("duration must be >= 1 minute");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_rounds_up_to_whole_cells() {
        let cfg = ScenarioConfig::default();
        let band = cfg.curb_band();
        assert_eq!(band.cells, 4);
        assert!((band.depth - 1.6).abs() < 1e-12);
        let echo = serde_json::to_value(cfg.echo()).unwrap();
        assert_eq!(echo["curb_band_cells"], 4);
    }

    #[test]
    fn exact_multiple_does_not_add_a_cell() {
        assert_eq!(cells_ceil(1.6, 0.4), 4);
        assert_eq!(cells_ceil(1.2, 0.4), 3);
        assert_eq!(cells_ceil(1.21, 0.4), 4);
    }

    #[test]
    fn crosswalk_beyond_road_is_rejected() {
        let cfg = ScenarioConfig {
            crosswalk_position: 200.0,
            road_length: 100.0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("crosswalk_position"), "{err}");
    }

    #[test]
    fn bad_probability_and_step_rejected() {
        let cfg = ScenarioConfig {
            p_deliberate: DeliberateProbability::scalar(1.2),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ScenarioConfig {
            time_step: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("time_step"));
    }

    #[test]
    fn unknown_keys_are_an_error() {
        let err = ScenarioConfig::from_json_str(r#"{"lane_count": 1, "lanes": 2}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn table_lookup_precedence() {
        let json = r#"{"p_deliberate": {"default": 0.1, "near": 0.5, "cells": {"near.on_zebra": 0.05}}}"#;
        let cfg = ScenarioConfig::from_json_str(json).unwrap();
        let p = &cfg.p_deliberate;
        assert_eq!(p.lookup(Side::Near, PositionCategory::OnZebra), 0.05);
        assert_eq!(p.lookup(Side::Near, PositionCategory::WaitingAtCurb), 0.5);
        assert_eq!(p.lookup(Side::Far, PositionCategory::WaitingAtCurb), 0.1);

        let bad = r#"{"p_deliberate": {"default": 0.1, "cells": {"left.on_zebra": 0.05}}}"#;
        assert!(ScenarioConfig::from_json_str(bad).is_err());
    }

    #[test]
    fn move_probability_snaps_near_one() {
        let cfg = ScenarioConfig {
            desired_speed_ped: 1.33,
            ..Default::default()
        };
        assert_eq!(cfg.ped_move_probability(), 1.0);
        let slow = ScenarioConfig {
            desired_speed_ped: 0.8,
            ..Default::default()
        };
        assert!((slow.ped_move_probability() - 0.6).abs() < 1e-12);
    }
}
