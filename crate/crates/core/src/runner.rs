//! Batch entry points: single runs, replications, demand sweeps and
//! calibration, with their CSV and JSON outputs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibration::{
    calibrate_noncompliance, calibrate_per_side, CalibrationResult, RunBudget,
    SideCalibrationResult,
};
use crate::config::{ConfigEcho, ScenarioConfig};
use crate::error::RunError;
use crate::interaction::CrossingEpisode;
use crate::metrics::{
    aggregate_minutes, capacity_and_los, near_accident_count, tally_compliance, ComplianceTable,
    Los, MinuteRecord,
};
use crate::stats::{regress_noncompliance, MinuteRegression};
use crate::world::simulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub scenario_sha256: String,
    pub config: ConfigEcho,
    pub compliance: ComplianceTable,
    pub vehicles_spawned: u64,
    pub pedestrians_spawned: u64,
    pub vehicles_per_min: f64,
    pub crossing_peds_per_min: f64,
    pub throughput_veh_h: f64,
    pub mean_ped_delay_s: Option<f64>,
    pub delay_samples: usize,
    pub los: Los,
    pub near_accidents: usize,
    pub overlaps: usize,
}

impl RunSummary {
    pub fn arrival_rates(&self) -> (f64, f64) {
        let minutes = f64::from(self.config.config.duration);
        (
            self.vehicles_spawned as f64 / minutes,
            self.pedestrians_spawned as f64 / minutes,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub summary: RunSummary,
    pub episodes: Vec<CrossingEpisode>,
    pub minutes: Vec<MinuteRecord>,
}

impl RunOutputs {
    pub fn episodes_csv(&self) -> Result<Vec<u8>, RunError> {
        episodes_csv(&self.episodes)
    }

    pub fn minutes_csv(&self) -> Result<Vec<u8>, RunError> {
        minutes_csv(&self.minutes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash used when a config did not come from a file.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    sha256_hex(&json)
}

/// Simulates one replication of `cfg` with `seed` and derives every table.
pub fn execute(cfg: &ScenarioConfig, seed: u64, scenario_sha256: &str) -> Result<RunOutputs, RunError> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let log = simulate(&cfg)?;
    let minutes = aggregate_minutes(&log)?;
    let compliance = tally_compliance(&log.episodes);
    let capacity = capacity_and_los(&log, &cfg.los_bands);
    let duration_min = f64::from(cfg.duration);
    let summary = RunSummary {
        seed,
        scenario_sha256: scenario_sha256.to_string(),
        config: cfg.echo(),
        compliance,
        vehicles_spawned: log.events.cars_spawned,
        pedestrians_spawned: log.events.peds_spawned,
        vehicles_per_min: log.events.vehicle_passes.len() as f64 / duration_min,
        crossing_peds_per_min: log.events.crossing_entries.len() as f64 / duration_min,
        throughput_veh_h: capacity.throughput_veh_h,
        mean_ped_delay_s: capacity.mean_ped_delay_s,
        delay_samples: capacity.delay_samples,
        los: capacity.los,
        near_accidents: near_accident_count(&log.episodes, cfg.ttc_threshold),
        overlaps: log.events.overlaps.len(),
    };
    Ok(RunOutputs {
        summary,
        episodes: log.episodes,
        minutes,
    })
}

fn fmt_time(t: f64) -> String {
    format!("{t:.3}")
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct EpisodeRow {
    pub episode_id: u64,
    pub start_s: String,
    pub end_s: String,
    pub car_id: u64,
    pub ped_ids: String,
    pub category: &'static str,
    pub side: &'static str,
    pub decision: &'static str,
    pub min_ttc_s: String,
}

impl From<&CrossingEpisode> for EpisodeRow {
    fn from(e: &CrossingEpisode) -> Self {
        EpisodeRow {
            episode_id: e.episode_id.0,
            start_s: fmt_time(e.start_time),
            end_s: e.end_time.map(fmt_time).unwrap_or_default(),
            car_id: e.car_id.0,
            ped_ids: e
                .ped_ids
                .iter()
                .map(|p| p.0.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            category: e.category.as_str(),
            side: e.side.as_str(),
            decision: e.decision.map_or("", |d| d.kind.as_str()),
            min_ttc_s: fmt_opt(e.min_ttc, 4),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MinuteRow {
    pub minute: u32,
    pub vehicles: u32,
    pub crossing_peds: u32,
    pub episodes: u32,
    pub pct_noncompliant: String,
}

impl From<&MinuteRecord> for MinuteRow {
    fn from(m: &MinuteRecord) -> Self {
        MinuteRow {
            minute: m.minute_index,
            vehicles: m.n_vehicles,
            crossing_peds: m.n_crossing_peds,
            episodes: m.n_episodes,
            pct_noncompliant: fmt_opt(m.pct_noncompliant, 4),
        }
    }
}

pub const EPISODE_COLUMNS: [&str; 9] = [
    "episode_id",
    "start_s",
    "end_s",
    "car_id",
    "ped_ids",
    "category",
    "side",
    "decision",
    "min_ttc_s",
];

pub const MINUTE_COLUMNS: [&str; 5] = [
    "minute",
    "vehicles",
    "crossing_peds",
    "episodes",
    "pct_noncompliant",
];

fn to_csv<T: Serialize>(headers: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, RunError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let ser = |e: csv::Error| RunError::Serialize(e.to_string());
    w.write_record(headers).map_err(ser)?;
    for row in rows {
        w.serialize(row).map_err(ser)?;
    }
    w.into_inner().map_err(|e| RunError::Serialize(e.to_string()))
}

pub fn episodes_csv(episodes: &[CrossingEpisode]) -> Result<Vec<u8>, RunError> {
    to_csv(&EPISODE_COLUMNS, episodes.iter().map(EpisodeRow::from))
}

pub fn minutes_csv(minutes: &[MinuteRecord]) -> Result<Vec<u8>, RunError> {
    to_csv(&MINUTE_COLUMNS, minutes.iter().map(MinuteRow::from))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, RunError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| RunError::Serialize(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|e| RunError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|e| RunError::io(path, e))
}

fn write_run(out: &RunOutputs, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, RunError> {
    // serialize everything before touching the filesystem
    let files: Vec<(PathBuf, Vec<u8>)> = match format {
        OutputFormat::Csv => vec![
            (dir.join("episodes.csv"), out.episodes_csv()?),
            (dir.join("minutes.csv"), out.minutes_csv()?),
            (dir.join("summary.json"), to_json(&out.summary)?),
        ],
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Bundle<'a> {
                summary: &'a RunSummary,
                episodes: Vec<EpisodeRow>,
                minutes: Vec<MinuteRow>,
            }
            let bundle = Bundle {
                summary: &out.summary,
                episodes: out.episodes.iter().map(EpisodeRow::from).collect(),
                minutes: out.minutes.iter().map(MinuteRow::from).collect(),
            };
            vec![(dir.join("run.json"), to_json(&bundle)?)]
        }
    };
    create_dir(dir)?;
    for (path, bytes) in &files {
        write_file(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn run_scenario(
    scenario: &Path,
    seed: u64,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<RunOutputs, RunError> {
    let (cfg, bytes) = ScenarioConfig::load(scenario)?;
    let out = execute(&cfg, seed, &sha256_hex(&bytes))?;
    write_run(&out, out_dir, format)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> Option<MeanSd> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanSd { mean, sd, n })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub scenario_sha256: String,
    pub seeds: Vec<u64>,
    pub pct_noncompliant: Option<MeanSd>,
    pub pct_noncompliant_near: Option<MeanSd>,
    pub pct_noncompliant_far: Option<MeanSd>,
    pub vehicle_arrivals_per_min: Option<MeanSd>,
    pub pedestrian_arrivals_per_min: Option<MeanSd>,
    pub vehicles_per_min: Option<MeanSd>,
    pub crossing_peds_per_min: Option<MeanSd>,
    pub mean_ped_delay_s: Option<MeanSd>,
    pub near_accidents: Option<MeanSd>,
    pub overlaps_total: usize,
    pub failures: Vec<SeedFailure>,
}

impl BatchSummary {
    pub fn from_runs(scenario_sha256: &str, runs: &[RunOutputs], failures: Vec<SeedFailure>) -> Self {
        let collect = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
            MeanSd::of(&runs.iter().filter_map(|r| f(&r.summary)).collect::<Vec<_>>())
        };
        BatchSummary {
            scenario_sha256: scenario_sha256.to_string(),
            seeds: runs.iter().map(|r| r.summary.seed).collect(),
            pct_noncompliant: collect(&|s| s.compliance.nc_fraction().map(|f| 100.0 * f)),
            pct_noncompliant_near: collect(&|s| s.compliance.near.nc_fraction().map(|f| 100.0 * f)),
            pct_noncompliant_far: collect(&|s| s.compliance.far.nc_fraction().map(|f| 100.0 * f)),
            vehicle_arrivals_per_min: collect(&|s| Some(s.arrival_rates().0)),
            pedestrian_arrivals_per_min: collect(&|s| Some(s.arrival_rates().1)),
            vehicles_per_min: collect(&|s| Some(s.vehicles_per_min)),
            crossing_peds_per_min: collect(&|s| Some(s.crossing_peds_per_min)),
            mean_ped_delay_s: collect(&|s| s.mean_ped_delay_s),
            near_accidents: collect(&|s| Some(s.near_accidents as f64)),
            overlaps_total: runs.iter().map(|r| r.summary.overlaps).sum(),
            failures,
        }
    }
}

pub fn check_seeds(seeds: &[u64]) -> Result<(), RunError> {
    if seeds.is_empty() {
        return Err(RunError::Empty("seed list"));
    }
    let mut seen = BTreeSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(RunError::DuplicateSeed(s));
        }
    }
    Ok(())
}

/// Runs `seeds` in parallel; successful runs keep their input order.
pub fn execute_batch(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    scenario_sha256: &str,
) -> Result<(Vec<RunOutputs>, Vec<SeedFailure>), RunError> {
    check_seeds(seeds)?;
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&s| (s, execute(cfg, s, scenario_sha256)))
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(out) => runs.push(out),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok((runs, failures))
}

pub fn run_batch(scenario: &Path, seeds: &[u64], out_dir: &Path) -> Result<BatchSummary, RunError> {
    check_seeds(seeds)?;
    let (cfg, bytes) = ScenarioConfig::load(scenario)?;
    let hash = sha256_hex(&bytes);
    let (runs, failures) = execute_batch(&cfg, seeds, &hash)?;
    let summary = BatchSummary::from_runs(&hash, &runs, failures);
    for run in &runs {
        write_run(run, &out_dir.join(format!("seed_{}", run.summary.seed)), OutputFormat::Csv)?;
    }
    create_dir(out_dir)?;
    write_file(&out_dir.join("batch_summary.json"), &to_json(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub veh_rate: f64,
    pub ped_rate: f64,
    pub pct_noncompliant: Option<MeanSd>,
    pub vehicles_per_min: Option<MeanSd>,
    pub crossing_peds_per_min: Option<MeanSd>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PooledMinute {
    pub veh_rate: f64,
    pub ped_rate: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub record: MinuteRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub scenario_sha256: String,
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub cells: Vec<SweepCell>,
    pub regression: MinuteRegression,
    #[serde(skip)]
    pub pooled: Vec<PooledMinute>,
}

/// Runs every (vehicle rate, pedestrian rate, seed) combination and
/// regresses the pooled minute records.
pub fn execute_sweep(
    cfg: &ScenarioConfig,
    veh_rates: &[f64],
    ped_rates: &[f64],
    seeds: &[u64],
    scenario_sha256: &str,
) -> Result<SweepSummary, RunError> {
    if veh_rates.is_empty() {
        return Err(RunError::Empty("vehicle rate grid"));
    }
    if ped_rates.is_empty() {
        return Err(RunError::Empty("pedestrian rate grid"));
    }
    check_seeds(seeds)?;
    let jobs: Vec<(f64, f64, u64)> = veh_rates
        .iter()
        .flat_map(|&v| ped_rates.iter().flat_map(move |&p| seeds.iter().map(move |&s| (v, p, s))))
        .collect();
    let results: Vec<(f64, f64, RunOutputs)> = jobs
        .par_iter()
        .map(|&(v, p, s)| {
            let mut c = cfg.clone();
            c.veh_arrival_rate = v;
            c.ped_arrival_rate = p;
            c.validate()?;
            execute(&c, s, scenario_sha256).map(|o| (v, p, o))
        })
        .collect::<Result<_, RunError>>()?;

    let mut pooled = Vec::new();
    for (v, p, out) in &results {
        for m in &out.minutes {
            pooled.push(PooledMinute {
                veh_rate: *v,
                ped_rate: *p,
                seed: out.summary.seed,
                record: m.clone(),
            });
        }
    }
    let records: Vec<MinuteRecord> = pooled.iter().map(|m| m.record.clone()).collect();
    let regression = regress_noncompliance(&records)?;

    let mut cells = Vec::new();
    for &v in veh_rates {
        for &p in ped_rates {
            let runs: Vec<&RunOutputs> = results
                .iter()
                .filter(|(rv, rp, _)| *rv == v && *rp == p)
                .map(|(_, _, o)| o)
                .collect();
            let stat = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
                MeanSd::of(&runs.iter().filter_map(|r| f(&r.summary)).collect::<Vec<_>>())
            };
            cells.push(SweepCell {
                veh_rate: v,
                ped_rate: p,
                pct_noncompliant: stat(&|s| s.compliance.nc_fraction().map(|f| 100.0 * f)),
                vehicles_per_min: stat(&|s| Some(s.vehicles_per_min)),
                crossing_peds_per_min: stat(&|s| Some(s.crossing_peds_per_min)),
            });
        }
    }
    Ok(SweepSummary {
        scenario_sha256: scenario_sha256.to_string(),
        seeds: seeds.to_vec(),
        runs: results.len(),
        cells,
        regression,
        pooled,
    })
}

pub fn pooled_minutes_csv(pooled: &[PooledMinute]) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| RunError::Serialize(e.to_string());
    let mut header = vec!["veh_rate", "ped_rate", "seed"];
    header.extend(MINUTE_COLUMNS);
    w.write_record(&header).map_err(ser)?;
    for m in pooled {
        let row = MinuteRow::from(&m.record);
        w.write_record([
            m.veh_rate.to_string(),
            m.ped_rate.to_string(),
            m.seed.to_string(),
            row.minute.to_string(),
            row.vehicles.to_string(),
            row.crossing_peds.to_string(),
            row.episodes.to_string(),
            row.pct_noncompliant,
        ])
        .map_err(ser)?;
    }
    w.into_inner().map_err(|e| RunError::Serialize(e.to_string()))
}

pub fn run_sweep(
    scenario: &Path,
    veh_rates: &[f64],
    ped_rates: &[f64],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<SweepSummary, RunError> {
    let (cfg, bytes) = ScenarioConfig::load(scenario)?;
    let summary = execute_sweep(&cfg, veh_rates, ped_rates, seeds, &sha256_hex(&bytes))?;
    let pooled = pooled_minutes_csv(&summary.pooled)?;
    let json = to_json(&summary)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("pooled_minutes.csv"), &pooled)?;
    write_file(&out_dir.join("sweep_summary.json"), &json)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub scenario_sha256: String,
    pub target: f64,
    pub seeds: Vec<u64>,
    pub overall: CalibrationResult,
    pub per_side: Option<SideCalibrationTargets>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideCalibrationTargets {
    pub near_target: f64,
    pub far_target: f64,
    pub result: SideCalibrationResult,
}

pub fn run_calibration(
    scenario: &Path,
    target: f64,
    sides: Option<(f64, f64)>,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<CalibrationReport, RunError> {
    check_seeds(seeds)?;
    let (cfg, bytes) = ScenarioConfig::load(scenario)?;
    let budget = RunBudget::new(seeds.to_vec());
    let overall = calibrate_noncompliance(target, &cfg, &budget)?;
    let per_side = sides
        .map(|(near, far)| {
            calibrate_per_side(near, far, &cfg, &budget, 4).map(|result| SideCalibrationTargets {
                near_target: near,
                far_target: far,
                result,
            })
        })
        .transpose()?;
    let report = CalibrationReport {
        scenario_sha256: sha256_hex(&bytes),
        target,
        seeds: seeds.to_vec(),
        overall,
        per_side,
    };
    let json = to_json(&report)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("calibration.json"), &json)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_small_cases() {
        assert_eq!(MeanSd::of(&[]), None);
        assert_eq!(MeanSd::of(&[3.0]), Some(MeanSd { mean: 3.0, sd: 0.0, n: 1 }));
        let m = MeanSd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((m.mean - 2.5).abs() < 1e-12);
        assert!((m.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn seed_list_checks() {
        assert!(matches!(check_seeds(&[]), Err(RunError::Empty(_))));
        assert!(matches!(check_seeds(&[1, 2, 1]), Err(RunError::DuplicateSeed(1))));
        assert!(check_seeds(&[3, 1, 2]).is_ok());
    }

    #[test]
    fn empty_tables_have_headers_only() {
        let e = String::from_utf8(episodes_csv(&[]).unwrap()).unwrap();
        assert_eq!(e.trim_end(), EPISODE_COLUMNS.join(","));
        let m = String::from_utf8(minutes_csv(&[]).unwrap()).unwrap();
        assert_eq!(m.trim_end(), MINUTE_COLUMNS.join(","));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
