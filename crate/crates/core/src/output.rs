//! CSV schemas and emission.
//!
//! Every file is UTF-8 with a fixed header. Rows are written sorted by the
//! record's key. Reals are rounded to 9 significant digits and printed in
//! the shortest form that reads back as the rounded value.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::config::Condition;

/// Rounds to 9 significant digits, then prints the shortest round-trip form.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if rounded.abs() >= 1e-5 && rounded.abs() < 1e16 {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// Order-preserving key for non-negative reals.
fn real_key(x: f64) -> u64 {
    x.to_bits()
}

pub trait CsvRecord {
    const HEADER: &'static str;
    type Key: Ord;
    fn key(&self) -> Self::Key;
    fn write_row<W: Write>(&self, out: &mut W) -> io::Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentRow {
    pub condition: Condition,
    pub run: usize,
    pub step: usize,
    pub agent: usize,
    pub belief: f64,
    pub world_trust: f64,
}

impl CsvRecord for AgentRow {
    const HEADER: &'static str = "condition,run,step,agent,belief,world_trust";
    type Key = (Condition, usize, usize, usize);

    fn key(&self) -> Self::Key {
        (self.condition, self.run, self.step, self.agent)
    }

    fn write_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.condition,
            self.run,
            self.step,
            self.agent,
            format_real(self.belief),
            format_real(self.world_trust)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub condition: Condition,
    pub p_obj: f64,
    pub run: usize,
    pub step: usize,
    pub mean_belief: f64,
    pub belief_variance: f64,
    pub mean_world_trust: f64,
}

impl CsvRecord for RunRow {
    const HEADER: &'static str = "condition,p_obj,run,step,mean_belief,belief_variance,mean_world_trust";
    type Key = (Condition, u64, usize, usize);

    fn key(&self) -> Self::Key {
        (self.condition, real_key(self.p_obj), self.run, self.step)
    }

    fn write_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.condition,
            format_real(self.p_obj),
            self.run,
            self.step,
            format_real(self.mean_belief),
            format_real(self.belief_variance),
            format_real(self.mean_world_trust)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryRow {
    pub condition: Condition,
    pub p_obj: f64,
    pub step: usize,
    pub grand_mean_belief: f64,
    pub between_run_variance: f64,
}

impl CsvRecord for SummaryRow {
    const HEADER: &'static str = "condition,p_obj,step,grand_mean_belief,between_run_variance";
    type Key = (Condition, u64, usize);

    fn key(&self) -> Self::Key {
        (self.condition, real_key(self.p_obj), self.step)
    }

    fn write_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{}",
            self.condition,
            format_real(self.p_obj),
            self.step,
            format_real(self.grand_mean_belief),
            format_real(self.between_run_variance)
        )
    }
}

/// Final-step accuracy of isolated agents in one (reliability, base rate) cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyRow {
    pub condition: Condition,
    pub p_obj: f64,
    pub base_rate: f64,
    pub runs: usize,
    pub mean_brier: f64,
    pub mean_absolute_error: f64,
}

impl CsvRecord for AccuracyRow {
    const HEADER: &'static str = "condition,p_obj,base_rate,runs,mean_brier,mean_absolute_error";
    type Key = (Condition, u64, u64);

    fn key(&self) -> Self::Key {
        (self.condition, real_key(self.p_obj), real_key(self.base_rate))
    }

    fn write_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.condition,
            format_real(self.p_obj),
            format_real(self.base_rate),
            self.runs,
            format_real(self.mean_brier),
            format_real(self.mean_absolute_error)
        )
    }
}

/// Sorts `records` by key and writes them under the schema header.
pub fn emit_csv<R: CsvRecord>(records: &mut [R], path: &Path) -> io::Result<()> {
    records.sort_by_key(|r| r.key());
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", R::HEADER)?;
    for r in records.iter() {
        r.write_row(&mut out)?;
    }
    out.flush()
}
