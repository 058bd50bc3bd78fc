use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;

pub const METRICS_HEADER: &str =
    "epoch,cls_loss,dom_loss,mdd_loss,total_loss,source_acc,target_acc,pseudo_acc,mdd_value";

/// Per-epoch means over the epoch's steps, plus accuracies measured at the
/// end of the epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub cls_loss: f64,
    pub dom_loss: f64,
    pub mdd_loss: f64,
    pub total_loss: f64,
    pub source_acc: f64,
    /// Needs target labels; otherwise empty in the CSV.
    pub target_acc: Option<f64>,
    /// Agreement of the pseudo-labels used during the epoch with the true
    /// target labels.
    pub pseudo_acc: Option<f64>,
    /// Unmasked three-term batch MDD.
    pub mdd_value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl MetricsLog {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.epoch,
                fmt_f64(r.cls_loss),
                fmt_f64(r.dom_loss),
                fmt_f64(r.mdd_loss),
                fmt_f64(r.total_loss),
                fmt_f64(r.source_acc),
                opt(r.target_acc),
                opt(r.pseudo_acc),
                fmt_f64(r.mdd_value),
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let here = Path::new("<metrics>");
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err(Error::parse(here, "unexpected metrics header"));
        }
        let num = |line: usize, s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(here, format!("line {line}: bad number {s:?}")))
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::parse(
                    here,
                    format!("line {line_no}: expected 9 fields, got {}", f.len()),
                ));
            }
            let optional = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(line_no, s).map(Some)
                }
            };
            rows.push(MetricsRow {
                epoch: f[0]
                    .parse()
                    .map_err(|_| Error::parse(here, format!("line {line_no}: bad epoch")))?,
                cls_loss: num(line_no, f[1])?,
                dom_loss: num(line_no, f[2])?,
                mdd_loss: num(line_no, f[3])?,
                total_loss: num(line_no, f[4])?,
                source_acc: num(line_no, f[5])?,
                target_acc: optional(f[6])?,
                pseudo_acc: optional(f[7])?,
                mdd_value: num(line_no, f[8])?,
            });
        }
        Ok(MetricsLog { rows })
    }
}
