use std::io::Write;

use super::{
    impute, is_missing_token, resolve_labels, Dataset, DatasetSchema, FeatureKind, FeatureMatrix,
    PositiveClass, RawValue,
};
use crate::error::{Error, Result};

/// Parses an RFC 4180 CSV file with a mandatory header row.
///
/// Columns whose non-missing values all parse as numbers are numeric; every
/// other column is nominal, coded by order of first appearance. Missing
/// cells (`""`, `?`, `NA`) are imputed.
pub fn parse_csv(bytes: &[u8], target_name: &str, positive: &PositiveClass) -> Result<Dataset> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::parse(1, "empty file"));
    }
    let target_col = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| Error::InvalidData(format!("target column `{target_name}` not found")))?;

    let mut records: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        records.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if records.is_empty() {
        return Err(Error::parse(2, "no data rows"));
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != target_col).collect();
    let mut kinds = Vec::with_capacity(feature_cols.len());
    let mut numeric = Vec::with_capacity(feature_cols.len());
    for &j in &feature_cols {
        let is_numeric = records
            .iter()
            .map(|r| r[j].as_str())
            .filter(|s| !is_missing_token(s))
            .all(|s| s.parse::<f64>().is_ok_and(f64::is_finite));
        if is_numeric {
            kinds.push(FeatureKind::Numeric);
        } else {
            let mut levels: Vec<String> = Vec::new();
            for r in &records {
                let s = &r[j];
                if !is_missing_token(s) && !levels.contains(s) {
                    levels.push(s.clone());
                }
            }
            kinds.push(FeatureKind::Nominal(levels));
        }
        numeric.push(is_numeric);
    }

    let mut target_levels: Vec<String> = Vec::new();
    let mut target_counts: Vec<usize> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let v = &r[target_col];
        if is_missing_token(v) {
            return Err(Error::parse(i + 2, "missing target value"));
        }
        match target_levels.iter().position(|l| l == v) {
            Some(k) => target_counts[k] += 1,
            None => {
                target_levels.push(v.clone());
                target_counts.push(1);
            }
        }
    }
    if let PositiveClass::Label(p) = positive {
        if !target_levels.contains(p) && target_levels.len() == 1 {
            target_levels.push(p.clone());
            target_counts.push(0);
        }
    }
    if target_levels.len() > 2 {
        return Err(Error::InvalidData(format!(
            "target column has label values outside a binary pair: {target_levels:?}"
        )));
    }
    if target_levels.len() < 2 {
        return Err(Error::InvalidData(format!(
            "target column has a single label value {target_levels:?}"
        )));
    }
    let (positive_label, negative_label) = resolve_labels(&target_levels, &target_counts, positive)?;

    let mut raw = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let mut row = Vec::with_capacity(feature_cols.len());
        for (k, &j) in feature_cols.iter().enumerate() {
            let s = r[j].as_str();
            row.push(if is_missing_token(s) {
                RawValue::Missing
            } else {
                match &kinds[k] {
                    FeatureKind::Numeric => RawValue::Number(
                        s.parse().map_err(|_| Error::parse(i + 2, format!("bad number `{s}`")))?,
                    ),
                    FeatureKind::Nominal(levels) => {
                        RawValue::Code(levels.iter().position(|l| l == s).unwrap_or(0))
                    }
                }
            });
        }
        raw.push(row);
        labels.push(u8::from(r[target_col] == positive_label));
    }

    let n = raw.len();
    let d = feature_cols.len();
    let data = impute(&numeric, raw);
    let schema = DatasetSchema {
        feature_names: feature_cols.iter().map(|&j| header[j].clone()).collect(),
        feature_kinds: kinds,
        target_name: target_name.to_string(),
        positive_label,
        negative_label,
    };
    Dataset::new(schema, FeatureMatrix::new(n, d, data)?, labels)
}

/// Writes the dataset as CSV: feature columns in schema order, target last,
/// nominal codes rendered as their level strings.
pub fn write_csv<W: Write>(dataset: &Dataset, sink: W) -> Result<()> {
    let mut writer = ::csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = dataset
        .schema
        .feature_names
        .iter()
        .map(String::as_str)
        .collect();
    header.push(&dataset.schema.target_name);
    writer.write_record(&header)?;
    for (i, row) in dataset.rows.rows().enumerate() {
        let mut fields: Vec<String> = row
            .iter()
            .zip(&dataset.schema.feature_kinds)
            .map(|(v, kind)| match kind {
                FeatureKind::Numeric => format!("{v}"),
                FeatureKind::Nominal(levels) => levels[*v as usize].clone(),
            })
            .collect();
        fields.push(if dataset.labels[i] == 1 {
            dataset.schema.positive_label.clone()
        } else {
            dataset.schema.negative_label.clone()
        });
        writer.write_record(&fields)?;
    }
    writer.flush()?;
    Ok(())
}
