use std::collections::BTreeMap;
use std::path::Path;

use super::{DatasetError, DatasetType, Result, Sample, TimeSeriesDataset};

/// Reads a UCR-archive style file: one sample per line, the class label in the
/// first field and the sequence in the rest. Tab- and comma-separated files are
/// both accepted. Labels are remapped to `0..num_classes` in sorted order.
pub fn load_ucr_tsv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    load_ucr_tsv_as(path, DatasetType::Sensor)
}

pub fn load_ucr_tsv_as(path: impl AsRef<Path>, type_tag: DatasetType) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ucr".into());
    parse_ucr(&name, &text, type_tag)
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').collect()
    } else if line.contains(',') {
        line.split(',').collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Numeric labels sort numerically, anything else lexicographically.
fn label_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

pub fn parse_ucr(name: &str, text: &str, type_tag: DatasetType) -> Result<TimeSeriesDataset> {
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields = split_fields(line);
        let err = |message: String| DatasetError::FormatError { line: lineno + 1, message };
        if fields.len() < 2 {
            return Err(err("expected a label followed by at least one value".into()));
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                let f = f.trim();
                if f.is_empty() || f.eq_ignore_ascii_case("nan") || f == "?" {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>().map_err(|_| err(format!("bad value `{f}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(err(format!("row has {} values, expected {w}", values.len())));
            }
            Some(_) => {}
        }
        rows.push((fields[0].trim().to_string(), values));
    }
    let width = width.ok_or_else(|| DatasetError::InvalidDataset("file has no samples".into()))?;

    let mut labels: Vec<&str> = rows.iter().map(|(l, _)| l.as_str()).collect();
    labels.sort_by(|a, b| label_order(a, b));
    labels.dedup_by(|a, b| label_order(a, b).is_eq());
    let index: BTreeMap<String, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.to_string(), i))
        .collect();
    let lookup = |l: &str| {
        index
            .get(l)
            .copied()
            .or_else(|| index.iter().find(|(k, _)| label_order(k, l).is_eq()).map(|(_, &v)| v))
            .expect("label collected above")
    };
    let num_classes = index.len();
    let samples = rows
        .iter()
        .enumerate()
        .map(|(i, (l, values))| Sample {
            id: i as u64,
            label: lookup(l),
            values: values.clone(),
        })
        .collect();
    TimeSeriesDataset::new(name, type_tag, samples, num_classes, width)
}
