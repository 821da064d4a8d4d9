//! Per-iteration training log.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

/// Event tags in the order they may occur within one iteration.
pub const EVENT_ORDER: [&str; 7] = [
    "vanilla",
    "prune",
    "clone",
    "reinit",
    "opacity_reset",
    "simplify",
    "cull_rebuild",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    /// Gaussian count after this iteration's events.
    pub n_gaussians: usize,
    pub loss: f64,
    /// PSNR of this iteration's training view at the training resolution.
    pub psnr: f64,
    /// Mean full-resolution PSNR over all training views, when evaluated.
    pub eval_psnr: Option<f64>,
    /// Chamfer distance from the Gaussian centers to the reference points.
    pub chamfer: Option<f64>,
    pub wall_ms: f64,
    pub events: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

pub const CSV_HEADER: &str = "iteration,n_gaussians,loss,psnr,eval_psnr,chamfer,wall_ms,events";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iteration < row.iteration));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn row_at(&self, iteration: usize) -> Option<&LogRow> {
        self.rows.iter().find(|r| r.iteration == iteration)
    }

    /// Rows carrying the given event tag.
    pub fn with_event<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a LogRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.events.iter().any(|e| e == tag))
    }

    /// Gaussian count just before the events of `iteration`: the count of the
    /// previous logged row.
    pub fn count_before(&self, iteration: usize) -> Option<usize> {
        self.rows
            .iter()
            .take_while(|r| r.iteration < iteration)
            .last()
            .map(|r| r.n_gaussians)
    }

    /// Comma-separated rendering; event tags are joined with `+`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                r.n_gaussians,
                r.loss,
                r.psnr,
                opt(r.eval_psnr),
                opt(r.chamfer),
                r.wall_ms,
                r.events.join("+")
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize, n: usize, events: &[&str]) -> LogRow {
        LogRow {
            iteration: i,
            n_gaussians: n,
            loss: 0.5,
            psnr: 20.25,
            eval_psnr: None,
            chamfer: Some(0.125),
            wall_ms: 0.0,
            events: events.iter().map(|e| e.to_string()).collect(),
        }
    }

    #[test]
    fn csv_layout() {
        let mut log = TrainLog::default();
        log.push(row(10, 4, &[]));
        log.push(row(20, 8, &["clone", "cull_rebuild"]));
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "10,4,0.5,20.25,,0.125,0,");
        assert_eq!(lines[2], "20,8,0.5,20.25,,0.125,0,clone+cull_rebuild");
        assert_eq!(log.count_before(20), Some(4));
        assert_eq!(log.with_event("clone").count(), 1);
    }
}
