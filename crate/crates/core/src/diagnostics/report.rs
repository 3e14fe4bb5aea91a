//! Report containers and their JSON / CSV forms.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::fit::DecayFit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// First line of every CSV file.
    pub fn csv_comment(&self) -> String {
        format!("# command={}, config_hash={}, seed={}\n", self.command, self.config_hash, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn to_csv(&self, provenance: &Provenance) -> String {
        let mut s = provenance.csv_comment();
        s.push_str("time,value,stderr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.time, p.value, p.stderr);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub provenance: Provenance,
    pub metrics: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, DecayFit>,
    pub series: Vec<Series>,
    /// Pass/fail outcomes of thresholded checks.
    pub checks: BTreeMap<String, bool>,
    /// Wall-clock measurements; the only non-reproducible fields.
    pub timings_ns: BTreeMap<String, f64>,
}

fn finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::invalid(format!("report value `{name}` is not finite ({v})")));
    }
    Ok(())
}

impl DiagnosticsReport {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            provenance,
            metrics: BTreeMap::new(),
            fits: BTreeMap::new(),
            series: Vec::new(),
            checks: BTreeMap::new(),
            timings_ns: BTreeMap::new(),
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, v: f64) -> Result<()> {
        let name = name.into();
        finite(&name, v)?;
        self.metrics.insert(name, v);
        Ok(())
    }

    pub fn fit(&mut self, name: impl Into<String>, f: DecayFit) -> Result<()> {
        let name = name.into();
        finite(&name, f.rate)?;
        finite(&name, f.intercept)?;
        finite(&name, f.r2)?;
        self.fits.insert(name, f);
        Ok(())
    }

    pub fn series(&mut self, s: Series) -> Result<()> {
        for p in &s.points {
            finite(&s.name, p.time)?;
            finite(&s.name, p.value)?;
            finite(&s.name, p.stderr)?;
        }
        self.series.push(s);
        Ok(())
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool) {
        self.checks.insert(name.into(), passed);
    }

    pub fn timing(&mut self, name: impl Into<String>, ns: f64) {
        self.timings_ns.insert(name.into(), ns);
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.values().all(|&b| b)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
