use std::fmt;

use serde::{Deserialize, Serialize};

use super::metrics::ApMode;
use super::retrieval::EvalSubset;
use super::EvalError;
use crate::simeng::MeasureKind;
use crate::tamper::TamperStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApAtRecall {
    pub recall: f64,
    pub ap: f64,
}

/// Results for one (measure, strategy, subset) combination. All metrics are
/// fractions in [0, 1]; the CSV and text table show AP in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub corpus_id: String,
    pub measure: MeasureKind,
    pub test_set: String,
    pub strategy: TamperStrategy,
    pub seed: u64,
    pub subset: EvalSubset,
    pub ap_mode: ApMode,
    /// Settings the measure was computed with.
    pub scoring: String,
    pub n_documents: usize,
    /// Test-set documents without a value for the measure in either variant.
    pub n_excluded: usize,
    pub va: f64,
    pub auc: f64,
    pub ap_clean: Vec<ApAtRecall>,
    pub ap_tampered: Vec<ApAtRecall>,
}

pub const CSV_HEADER: [&str; 13] = [
    "measure",
    "test_set",
    "subset",
    "va",
    "auc",
    "ap_clean@25",
    "ap_clean@50",
    "ap_clean@100",
    "ap_tampered@25",
    "ap_tampered@50",
    "ap_tampered@100",
    "n_documents",
    "n_excluded",
];

const LEVELS: [f64; 3] = [0.25, 0.5, 1.0];

fn at(levels: &[ApAtRecall], recall: f64) -> Option<f64> {
    levels.iter().find(|a| a.recall == recall).map(|a| a.ap)
}

impl EvaluationReport {
    pub fn ap_clean_at(&self, recall: f64) -> Option<f64> {
        at(&self.ap_clean, recall)
    }

    pub fn ap_tampered_at(&self, recall: f64) -> Option<f64> {
        at(&self.ap_tampered, recall)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Config(e.to_string()))
    }

    fn csv_row(&self) -> Vec<String> {
        let pct = |v: Option<f64>| v.map(|x| (x * 100.0).to_string()).unwrap_or_default();
        let mut row = vec![
            self.measure.to_string(),
            self.test_set.clone(),
            self.subset.to_string(),
            self.va.to_string(),
            self.auc.to_string(),
        ];
        row.extend(LEVELS.iter().map(|&r| pct(self.ap_clean_at(r))));
        row.extend(LEVELS.iter().map(|&r| pct(self.ap_tampered_at(r))));
        row.push(self.n_documents.to_string());
        row.push(self.n_excluded.to_string());
        row
    }

    /// CSV with a header line and one row per report.
    pub fn to_csv(reports: &[EvaluationReport]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in reports {
            w.write_record(r.csv_row()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{:>7.2}", x * 100.0),
            None => format!("{:>7}", "-"),
        };
        writeln!(
            f,
            "{} / {} / {} (|D| = {}, excluded {})",
            self.measure, self.test_set, self.subset, self.n_documents, self.n_excluded
        )?;
        let groups = format!("{:13}|{:^21}|{:^21}", "", "AP-clean", "AP-tampered");
        writeln!(f, "{}", groups.trim_end())?;
        writeln!(
            f,
            "{:>6}{:>6} |{:>7}{:>7}{:>7} |{:>7}{:>7}{:>7}",
            "VA", "AUC", "@25%", "@50%", "@100%", "@25%", "@50%", "@100%"
        )?;
        write!(f, "{:>6.2}{:>6.2} |", self.va, self.auc)?;
        for r in LEVELS {
            write!(f, "{}", cell(self.ap_clean_at(r)))?;
        }
        write!(f, " |")?;
        for r in LEVELS {
            write!(f, "{}", cell(self.ap_tampered_at(r)))?;
        }
        Ok(())
    }
}
