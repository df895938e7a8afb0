//! Shared world frame for the pedestrian grid and the vehicle lanes.
//!
//! Rows run across the road from the outer edge of sidewalk A to the outer
//! edge of sidewalk B; columns run along the road. The first `lane_count`
//! lanes (counted from side A) carry forward traffic (+x), the rest carry
//! backward traffic. Vehicle positions are lane-local: distance travelled
//! from the lane's own origin.

use serde::{Deserialize, Serialize};

use crate::config::{cells_ceil, cells_round, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sidewalk {
    A,
    B,
}

impl Sidewalk {
    pub fn index(self) -> usize {
        match self {
            Sidewalk::A => 0,
            Sidewalk::B => 1,
        }
    }

    pub fn opposite(self) -> Sidewalk {
        match self {
            Sidewalk::A => Sidewalk::B,
            Sidewalk::B => Sidewalk::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Sidewalk(Sidewalk),
    Zebra,
    Roadway,
}

#[derive(Debug, Clone)]
pub struct Geometry {
    pub cell: f64,
    pub rows: usize,
    pub cols: usize,
    pub sidewalk_rows: usize,
    pub road_rows: usize,
    pub band_cells: usize,
    pub zebra_cols: std::ops::Range<usize>,
    /// World x of the left edge of column 0.
    pub x_origin: f64,
    pub road_length: f64,
    pub lane_count: usize,
    pub zebra_x0: f64,
    pub zebra_x1: f64,
    pub stop_line_offset: f64,
    lane_of_row: Vec<Option<usize>>,
    kinds: Vec<CellKind>,
}

impl Geometry {
    pub fn new(cfg: &ScenarioConfig) -> Geometry {
        let cell = cfg.cell_size;
        let sidewalk_rows = cells_round(cfg.sidewalk_depth, cell);
        let carriageway = cfg.total_lanes() as f64 * cfg.lane_width;
        let road_rows = cells_ceil(carriageway, cell).max(cfg.total_lanes());
        let margin = cells_round(cfg.sidewalk_margin, cell);
        let zebra = cells_round(cfg.crosswalk_width, cell).max(1);
        let rows = 2 * sidewalk_rows + road_rows;
        let cols = 2 * margin + zebra;
        let zebra_cols = margin..margin + zebra;

        let total_lanes = cfg.total_lanes();
        let lane_of_row = (0..rows)
            .map(|r| {
                if r < sidewalk_rows || r >= sidewalk_rows + road_rows {
                    None
                } else {
                    // Row centre decides the lane.
                    let y = (r - sidewalk_rows) as f64 * cell + cell / 2.0;
                    let lane = (y * total_lanes as f64 / (road_rows as f64 * cell)).floor() as usize;
                    Some(lane.min(total_lanes - 1))
                }
            })
            .collect::<Vec<_>>();

        let mut kinds = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let kind = if r < sidewalk_rows {
                    CellKind::Sidewalk(Sidewalk::A)
                } else if r >= sidewalk_rows + road_rows {
                    CellKind::Sidewalk(Sidewalk::B)
                } else if zebra_cols.contains(&c) {
                    CellKind::Zebra
                } else {
                    CellKind::Roadway
                };
                kinds.push(kind);
            }
        }

        Geometry {
            cell,
            rows,
            cols,
            sidewalk_rows,
            road_rows,
            band_cells: cfg.curb_band().cells,
            x_origin: cfg.crosswalk_position - margin as f64 * cell,
            zebra_x0: cfg.crosswalk_position,
            zebra_x1: cfg.crosswalk_position + zebra as f64 * cell,
            zebra_cols,
            road_length: cfg.road_length,
            lane_count: cfg.lane_count,
            stop_line_offset: cfg.stop_line_offset,
            lane_of_row,
            kinds,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.cols, idx % self.cols)
    }

    pub fn kind(&self, idx: usize) -> CellKind {
        self.kinds[idx]
    }

    pub fn is_walkable(&self, idx: usize) -> bool {
        !matches!(self.kinds[idx], CellKind::Roadway)
    }

    pub fn walkable_mask(&self) -> Vec<bool> {
        (0..self.n_cells()).map(|i| self.is_walkable(i)).collect()
    }

    pub fn is_zebra(&self, idx: usize) -> bool {
        matches!(self.kinds[idx], CellKind::Zebra)
    }

    pub fn total_lanes(&self) -> usize {
        2 * self.lane_count
    }

    pub fn lane_of_row(&self, row: usize) -> Option<usize> {
        self.lane_of_row[row]
    }

    pub fn lane_of_cell(&self, idx: usize) -> Option<usize> {
        self.lane_of_row(idx / self.cols)
    }

    pub fn direction(&self, lane: usize) -> Direction {
        if lane < self.lane_count {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }

    /// Sidewalk adjacent to the half of the carriageway that holds `lane`.
    pub fn near_sidewalk(&self, lane: usize) -> Sidewalk {
        match self.direction(lane) {
            Direction::Forward => Sidewalk::A,
            Direction::Backward => Sidewalk::B,
        }
    }

    /// Curb band side of a cell, if the cell lies inside one.
    pub fn band_side(&self, idx: usize) -> Option<Sidewalk> {
        let row = idx / self.cols;
        let s = self.sidewalk_rows;
        let road_end = s + self.road_rows;
        if row < s && row >= s - self.band_cells {
            Some(Sidewalk::A)
        } else if row >= road_end && row < road_end + self.band_cells {
            Some(Sidewalk::B)
        } else {
            None
        }
    }

    /// Grey cells: zebra plus both curb bands.
    pub fn is_grey(&self, idx: usize) -> bool {
        self.is_zebra(idx) || self.band_side(idx).is_some()
    }

    /// Sidewalk cells outside the curb band, where pedestrians appear.
    pub fn spawn_cells(&self, side: Sidewalk) -> Vec<usize> {
        let rows = match side {
            Sidewalk::A => 0..self.sidewalk_rows - self.band_cells,
            Sidewalk::B => self.sidewalk_rows + self.road_rows + self.band_cells..self.rows,
        };
        rows.flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.idx(r, c))
            .collect()
    }

    /// Cells that end a crossing started from `entry`.
    pub fn goal_cells(&self, entry: Sidewalk) -> Vec<usize> {
        let target = entry.opposite();
        (0..self.n_cells())
            .filter(|&i| self.kind(i) == CellKind::Sidewalk(target))
            .collect()
    }

    /// Road rows of `lane`, ordered from side A.
    pub fn lane_rows(&self, lane: usize) -> impl Iterator<Item = usize> + '_ {
        (self.sidewalk_rows..self.sidewalk_rows + self.road_rows)
            .filter(move |&r| self.lane_of_row(r) == Some(lane))
    }

    /// Road rows a pedestrian at `row` walking away from `entry` has still to
    /// enter, current row excluded.
    pub fn road_rows_ahead(&self, row: usize, entry: Sidewalk) -> usize {
        let s = self.sidewalk_rows;
        let e = s + self.road_rows;
        match entry {
            Sidewalk::A => {
                let from = (row + 1).max(s);
                e.saturating_sub(from)
            }
            Sidewalk::B => {
                let upto = row.min(e);
                upto.saturating_sub(s)
            }
        }
    }

    /// Lanes a pedestrian moving into `next_row` has still to cross, in walking order.
    pub fn lanes_ahead(&self, next_row: usize, entry: Sidewalk) -> Vec<usize> {
        let s = self.sidewalk_rows;
        let e = s + self.road_rows;
        let rows: Box<dyn Iterator<Item = usize>> = match entry {
            Sidewalk::A => Box::new(next_row.max(s)..e),
            Sidewalk::B => Box::new((s..(next_row + 1).min(e)).rev()),
        };
        let mut lanes: Vec<usize> = Vec::new();
        for r in rows {
            if let Some(l) = self.lane_of_row(r) {
                if lanes.last() != Some(&l) {
                    lanes.push(l);
                }
            }
        }
        lanes
    }

    /// Lane-local coordinate of the zebra's upstream edge.
    pub fn zebra_entry(&self, lane: usize) -> f64 {
        match self.direction(lane) {
            Direction::Forward => self.zebra_x0,
            Direction::Backward => self.road_length - self.zebra_x1,
        }
    }

    pub fn zebra_exit(&self, lane: usize) -> f64 {
        self.zebra_entry(lane) + (self.zebra_x1 - self.zebra_x0)
    }

    pub fn stop_line(&self, lane: usize) -> f64 {
        self.zebra_entry(lane) - self.stop_line_offset
    }

    /// Lane-local span `[lo, hi)` of a grid column.
    pub fn column_span(&self, lane: usize, col: usize) -> (f64, f64) {
        let x0 = self.x_origin + col as f64 * self.cell;
        let x1 = x0 + self.cell;
        match self.direction(lane) {
            Direction::Forward => (x0, x1),
            Direction::Backward => (self.road_length - x1, self.road_length - x0),
        }
    }
}
