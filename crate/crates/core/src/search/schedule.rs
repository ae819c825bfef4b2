use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Generate `width` candidates up to column `cut`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub cut: usize,
    pub width: usize,
}

/// Staged search: stage `i` carries `width_i` candidates from `cut_{i−1}` to
/// `cut_i`, then the top `width_{i+1}` survive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchSchedule {
    stages: Vec<Stage>,
}

impl SearchSchedule {
    /// Checks ordering and widths; the final cut is checked against `T` by
    /// [`SearchSchedule::validate_for`].
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::BadSchedule("no stages".into()));
        }
        let mut prev = Stage {
            cut: 0,
            width: usize::MAX,
        };
        for s in &stages {
            if s.width == 0 {
                return Err(Error::BadSchedule(format!("stage at cut {} has width 0", s.cut)));
            }
            if s.cut <= prev.cut {
                return Err(Error::BadSchedule(format!(
                    "cut steps must increase strictly, got {} after {}",
                    s.cut, prev.cut
                )));
            }
            if s.width > prev.width {
                return Err(Error::BadSchedule(format!(
                    "widths must not increase, got {} after {}",
                    s.width, prev.width
                )));
            }
            prev = *s;
        }
        Ok(Self { stages })
    }

    /// A single stage of `n` full sequences: best-of-`n`.
    pub fn best_of(n: usize, steps: usize) -> Result<Self> {
        Self::new(vec![Stage { cut: steps, width: n }])
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn final_cut(&self) -> usize {
        self.stages[self.stages.len() - 1].cut
    }

    pub fn validate_for(&self, steps: usize) -> Result<()> {
        if self.final_cut() != steps {
            return Err(Error::BadSchedule(format!(
                "final cut {} must equal the sequence length {steps}",
                self.final_cut()
            )));
        }
        Ok(())
    }

    /// Every interior cut must be a step the critic was supervised at.
    pub fn check_critic_steps(&self, interval: usize) -> Result<()> {
        for s in &self.stages[..self.stages.len() - 1] {
            if interval == 0 || s.cut % interval != 0 {
                return Err(Error::ScheduleCriticMismatch { cut: s.cut });
            }
        }
        Ok(())
    }
}

/// Tokens generated per codebook row: `Σ width_i · (cut_i − cut_{i−1})`.
pub fn schedule_cost(schedule: &SearchSchedule) -> usize {
    let mut prev = 0;
    let mut cost = 0;
    for s in schedule.stages() {
        cost += s.width * (s.cut - prev);
        prev = s.cut;
    }
    cost
}

impl FromStr for SearchSchedule {
    type Err = Error;

    /// Parses `cut:width` pairs separated by commas, e.g. `8:128,64:2`.
    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split(',')
            .map(|part| {
                let (cut, width) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::BadSchedule(format!("expected cut:width, got {part:?}")))?;
                let num = |x: &str| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::BadSchedule(format!("bad number {x:?} in {part:?}")))
                };
                Ok(Stage {
                    cut: num(cut)?,
                    width: num(width)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }
}

impl fmt::Display for SearchSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", s.cut, s.width)?;
        }
        Ok(())
    }
}
