//! Global versus localized errors for one sweep point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocusKind {
    Element,
    Pair,
    Star,
}

impl LocusKind {
    pub fn name(self) -> &'static str {
        match self {
            LocusKind::Element => "element",
            LocusKind::Pair => "pair",
            LocusKind::Star => "star",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusError {
    /// Element id, edge id or vertex id depending on the kind.
    pub id: usize,
    pub error_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusSet {
    pub kind: LocusKind,
    pub errors: Vec<LocusError>,
    pub sum_sq: f64,
    /// `global / sum`; absent when the sum vanishes.
    pub ratio: Option<f64>,
}

impl LocusSet {
    pub fn new(kind: LocusKind, errors: Vec<LocusError>, global_error_sq: f64) -> Self {
        let sum_sq: f64 = errors.iter().map(|e| e.error_sq).sum();
        let ratio = (sum_sq > 0.0).then(|| global_error_sq / sum_sq);
        Self { kind, errors, sum_sq, ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub global_error_sq: f64,
    pub quasi_monotone: bool,
    pub loci: Vec<LocusSet>,
    pub metadata: BTreeMap<String, Value>,
}

impl LocalizationReport {
    pub fn new(global_error_sq: f64, quasi_monotone: bool) -> Self {
        Self { global_error_sq, quasi_monotone, loci: Vec::new(), metadata: BTreeMap::new() }
    }

    pub fn push_locus(&mut self, kind: LocusKind, errors: Vec<LocusError>) {
        self.loci.push(LocusSet::new(kind, errors, self.global_error_sq));
    }

    pub fn locus(&self, kind: LocusKind) -> Option<&LocusSet> {
        self.loci.iter().find(|l| l.kind == kind)
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `# key=value` metadata lines, then one row per locus.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# global_error_sq={}", self.global_error_sq).unwrap();
        writeln!(out, "# quasi_monotone={}", self.quasi_monotone).unwrap();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}").unwrap();
        }
        out.push_str("locus_id,kind,error_sq\n");
        for set in &self.loci {
            for e in &set.errors {
                writeln!(out, "{},{},{}", e.id, set.kind.name(), e.error_sq).unwrap();
            }
        }
        out
    }
}
