//! Frequency grid specification `start:stop:points:log|lin`.

use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Lin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Config(format!("grid '{text}': {why}"));
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad("expected start:stop:points:log|lin"));
        }
        let num = |s: &str| f64::from_str(s).map_err(|_| bad("start and stop must be numbers"));
        let start = num(parts[0])?;
        let stop = num(parts[1])?;
        let points = usize::from_str(parts[2]).map_err(|_| bad("points must be a positive integer"))?;
        let spacing = match parts[3] {
            "log" => Spacing::Log,
            "lin" => Spacing::Lin,
            _ => return Err(bad("spacing must be log or lin")),
        };
        if !(start.is_finite() && stop.is_finite() && start > 0.0 && stop >= start) {
            return Err(bad("need 0 < start <= stop"));
        }
        if points == 0 || (points == 1 && stop != start) {
            return Err(bad("need at least two points for a range"));
        }
        Ok(Self {
            start,
            stop,
            points,
            spacing,
        })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let n = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let x = i as f64 / n;
                match self.spacing {
                    Spacing::Lin => self.start + x * (self.stop - self.start),
                    Spacing::Log => self.start * (self.stop / self.start).powf(x),
                }
            })
            .collect()
    }

    /// Grid snapped to whole cycles of a `window_s` analysis window,
    /// without duplicates.
    pub fn scan_frequencies(&self, window_s: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .frequencies()
            .into_iter()
            .map(|f| ((f * window_s).round().max(1.0)) / window_s)
            .collect();
        out.dedup();
        out
    }
}
