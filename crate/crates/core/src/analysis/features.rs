use std::fmt::Write as _;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::divergence::{DomainTag, SampleSet};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::models::AtmModel;

/// Learned features of both domains, labels carried over from the inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub source: SampleSet,
    pub target: SampleSet,
}

pub fn export_features(
    model: &AtmModel,
    source: &SampleSet,
    target: &SampleSet,
) -> Result<FeatureTable> {
    Ok(FeatureTable {
        source: source.with_features(model.features_of(source.features())?)?,
        target: target.with_features(model.features_of(target.features())?)?,
    })
}

/// Header `f0,..,f{d-1},label,domain`, source rows first. Unlabeled rows have
/// an empty label field.
pub fn features_csv(table: &FeatureTable) -> String {
    let d = table.source.dim();
    let mut out: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    out.push("label".into());
    out.push("domain".into());
    let mut text = out.join(",");
    text.push('\n');
    for set in [&table.source, &table.target] {
        for (i, row) in set.features().row_iter().enumerate() {
            for v in row {
                text.push_str(&fmt_f64(*v));
                text.push(',');
            }
            if let Some(labels) = set.labels() {
                let _ = write!(text, "{}", labels[i]);
            }
            let _ = writeln!(text, ",{}", set.domain().as_str());
        }
    }
    text
}

impl FeatureTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, features_csv(self)).map_err(|e| Error::io(path, e))
    }
}

/// Reads a file written by [`FeatureTable::write_csv`].
pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    let width = headers.len();
    if width < 3 || &headers[width - 2] != "label" || &headers[width - 1] != "domain" {
        return Err(Error::parse(path, "header must end with label,domain"));
    }
    let d = width - 2;
    let mut parts: [(Vec<f64>, Vec<Option<usize>>); 2] = Default::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        let domain: DomainTag = record[width - 1]
            .parse()
            .map_err(|_| Error::parse(path, format!("line {line}: bad domain tag")))?;
        let slot = &mut parts[usize::from(domain == DomainTag::Target)];
        for (j, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(path, format!("line {line}, column {}: bad number", j + 1))
            })?;
            slot.0.push(v);
        }
        let label = &record[width - 2];
        slot.1.push(if label.is_empty() {
            None
        } else {
            Some(label.parse().map_err(|_| {
                Error::parse(path, format!("line {line}: bad label {label:?}"))
            })?)
        });
    }
    let build = |(values, labels): (Vec<f64>, Vec<Option<usize>>), tag: DomainTag| {
        let n = labels.len();
        let labels = if labels.iter().all(Option::is_some) {
            Some(labels.into_iter().flatten().collect())
        } else if labels.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::parse(path, "labels present on only some rows"));
        };
        SampleSet::new(Tensor::new(n, d, values)?, labels, tag)
    };
    let [s, t] = parts;
    Ok(FeatureTable {
        source: build(s, DomainTag::Source)?,
        target: build(t, DomainTag::Target)?,
    })
}
