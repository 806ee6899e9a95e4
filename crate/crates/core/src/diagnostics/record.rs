use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the `L^p` entries of a record come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpSource {
    /// Norms of `f` on the phase-space grid.
    Grid,
    /// Norms of a kernel density estimate of `ρ`; biased, never used for acceptance.
    Kde,
}

/// One time slice of the monitored functionals.
///
/// Entries that the active representation cannot compute are `None` and
/// serialize as `null` (NDJSON) or an empty field (CSV).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    pub mass: f64,
    pub lp_source: Option<LpSource>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    /// `L^{5/3}` norm.
    pub l53: Option<f64>,
    pub linf: Option<f64>,
    /// `(1/2) ∬ |v|² f`.
    pub kinetic: f64,
    /// `(1/2) ∬ |x|² f`.
    pub x_moment: f64,
    /// `(1/2) ∬ K^ε ρ ρ`.
    pub interaction: Option<f64>,
    /// `∬ f log f`.
    pub entropy: Option<f64>,
    /// `∬ f log₊ f`.
    pub entropy_plus: Option<f64>,
    /// `∬ f log₋ f`, with `log₋ g = max(0, −log g)`.
    pub entropy_minus: Option<f64>,
    pub free_energy: Option<f64>,
    /// `∬ |∇_v f + v f|² / f`.
    pub dissipation: Option<f64>,
    pub virial_margin: Option<f64>,
    pub min_pair_dist: Option<f64>,
    pub max_density: Option<f64>,
    /// Mass lost through the open phase-space boundary so far.
    pub boundary_loss: Option<f64>,
}

impl DiagnosticsRecord {
    pub fn empty(t: f64, step: u64, mass: f64) -> Self {
        Self {
            t,
            step,
            mass,
            lp_source: None,
            l1: None,
            l2: None,
            l53: None,
            linf: None,
            kinetic: 0.0,
            x_moment: 0.0,
            interaction: None,
            entropy: None,
            entropy_plus: None,
            entropy_minus: None,
            free_energy: None,
            dissipation: None,
            virial_margin: None,
            min_pair_dist: None,
            max_density: None,
            boundary_loss: None,
        }
    }

    /// The `L^p` entry for `p ∈ {1, 2, 5/3, ∞}`.
    pub fn lp(&self, p: f64) -> Option<f64> {
        if p == 1.0 {
            self.l1
        } else if p == 2.0 {
            self.l2
        } else if (p - 5.0 / 3.0).abs() < 1e-12 {
            self.l53
        } else if p.is_infinite() {
            self.linf
        } else {
            None
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            fmt_f64(self.t),
            fmt_f64(self.mass),
            opt(self.l1),
            opt(self.l2),
            opt(self.l53),
            opt(self.linf),
            fmt_f64(self.kinetic),
            fmt_f64(self.x_moment),
            opt(self.interaction),
            opt(self.entropy),
            opt(self.free_energy),
            opt(self.dissipation),
            opt(self.virial_margin),
            opt(self.min_pair_dist),
            opt(self.max_density),
            opt(self.boundary_loss),
        ]
        .join(",")
    }
}

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 16] = [
    "t",
    "mass",
    "l1",
    "l2",
    "l53",
    "linf",
    "kinetic",
    "x_moment",
    "interaction",
    "entropy",
    "free_energy",
    "dissipation",
    "virial_margin",
    "min_pair_dist",
    "max_density",
    "boundary_loss",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

// Shortest round-trip representation, identical to the NDJSON encoding.
fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "nan".into())
}

pub fn write_ndjson<W: Write>(mut out: W, records: &[DiagnosticsRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line()?)?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(mut out: W, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(out, "{}", csv_header())?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("diagnostics line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nulls_are_explicit() {
        let mut r = DiagnosticsRecord::empty(0.5, 3, 1.0);
        r.kinetic = 1.5;
        let line = r.to_json_line().unwrap();
        assert!(line.contains("\"entropy\":null"), "{line}");
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
        assert!(row.starts_with("0.5,1.0,,,,,1.5,"), "{row}");
    }

    #[test]
    fn ndjson_round_trip() {
        let mut r = DiagnosticsRecord::empty(0.1, 1, 2.0);
        r.l2 = Some(0.3);
        r.lp_source = Some(LpSource::Grid);
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &[r.clone(), r.clone()]).unwrap();
        let back = read_ndjson(&buf[..]).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
        assert_eq!(back[0].lp(2.0), Some(0.3));
    }
}
