//! Dense ARFF (the OpenML download format).

use super::{
    impute, resolve_labels, Dataset, DatasetSchema, FeatureKind, FeatureMatrix, PositiveClass,
    RawValue,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ArffOptions {
    /// Target attribute; defaults to the last nominal attribute.
    pub target: Option<String>,
    pub positive: PositiveClass,
}

#[derive(Debug)]
struct Attribute {
    name: String,
    kind: FeatureKind,
}

/// Splits a comma-separated line, honouring single and double quotes and
/// backslash escapes inside quotes.
fn split_fields(line: &str, line_no: usize) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    let mut chars = line.chars();
    let mut was_quoted = false;
    while let Some(ch) = chars.next() {
        match quote {
            Some(q) => {
                if ch == '\\' {
                    if let Some(next) = chars.next() {
                        current.push(next);
                    }
                } else if ch == q {
                    quote = None;
                } else {
                    current.push(ch);
                }
            }
            None => match ch {
                '\'' | '"' => {
                    quote = Some(ch);
                    was_quoted = true;
                }
                ',' => {
                    fields.push(finish_field(&current, was_quoted));
                    current.clear();
                    was_quoted = false;
                }
                _ => current.push(ch),
            },
        }
    }
    if quote.is_some() {
        return Err(Error::parse(line_no, "unterminated quote"));
    }
    fields.push(finish_field(&current, was_quoted));
    Ok(fields)
}

fn finish_field(raw: &str, quoted: bool) -> String {
    if quoted {
        raw.to_string()
    } else {
        raw.trim().to_string()
    }
}

/// Reads `name` (possibly quoted) from the start of `rest`, returning it and
/// the remainder.
fn take_name(rest: &str, line_no: usize) -> Result<(String, &str)> {
    let rest = rest.trim_start();
    let mut chars = rest.char_indices();
    match chars.next() {
        Some((_, q @ ('\'' | '"'))) => {
            for (i, ch) in chars {
                if ch == q {
                    return Ok((rest[1..i].to_string(), &rest[i + 1..]));
                }
            }
            Err(Error::parse(line_no, "unterminated attribute name"))
        }
        Some(_) => {
            let end = rest
                .find(|c: char| c.is_whitespace() || c == '{')
                .unwrap_or(rest.len());
            Ok((rest[..end].to_string(), &rest[end..]))
        }
        None => Err(Error::parse(line_no, "missing attribute name")),
    }
}

fn parse_attribute(rest: &str, line_no: usize) -> Result<Attribute> {
    let (name, spec) = take_name(rest, line_no)?;
    let spec = spec.trim();
    let kind = if spec.starts_with('{') {
        let close = spec
            .rfind('}')
            .ok_or_else(|| Error::parse(line_no, "unterminated nominal specification"))?;
        let levels = split_fields(&spec[1..close], line_no)?;
        FeatureKind::Nominal(levels.into_iter().filter(|l| !l.is_empty()).collect())
    } else {
        match spec.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => FeatureKind::Numeric,
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "attribute `{name}` has unsupported type `{other}`"
                )))
            }
        }
    };
    Ok(Attribute { name, kind })
}

pub fn parse_arff(bytes: &[u8], options: &ArffOptions) -> Result<Dataset> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(0, format!("ARFF is not valid UTF-8: {e}")))?;
    let mut attributes: Vec<Attribute> = Vec::new();
    let mut in_data = false;
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            } else if lower.starts_with("@attribute") {
                attributes.push(parse_attribute(&line["@attribute".len()..], line_no)?);
            } else if lower.starts_with("@data") {
                in_data = true;
            } else {
                return Err(Error::parse(line_no, format!("unexpected header line `{line}`")));
            }
        } else {
            if line.starts_with('{') {
                return Err(Error::UnsupportedFormat(format!(
                    "sparse ARFF rows are not supported (line {line_no})"
                )));
            }
            let fields = split_fields(line, line_no)?;
            if fields.len() != attributes.len() {
                return Err(Error::parse(
                    line_no,
                    format!("expected {} values, found {}", attributes.len(), fields.len()),
                ));
            }
            rows.push((line_no, fields));
        }
    }
    if !in_data {
        return Err(Error::parse(0, "missing @data section"));
    }
    if attributes.is_empty() {
        return Err(Error::parse(0, "no @attribute declarations"));
    }
    if rows.is_empty() {
        return Err(Error::parse(0, "no data rows"));
    }

    let target_col = match &options.target {
        Some(t) => attributes
            .iter()
            .position(|a| &a.name == t)
            .ok_or_else(|| Error::InvalidData(format!("target attribute `{t}` not declared")))?,
        None => attributes
            .iter()
            .rposition(|a| matches!(a.kind, FeatureKind::Nominal(_)))
            .ok_or_else(|| Error::InvalidData("no nominal attribute to use as target".into()))?,
    };
    let target_levels = match &attributes[target_col].kind {
        FeatureKind::Nominal(levels) => levels.clone(),
        FeatureKind::Numeric => {
            return Err(Error::InvalidData(format!(
                "target `{}` is not nominal",
                attributes[target_col].name
            )))
        }
    };

    let feature_cols: Vec<usize> = (0..attributes.len()).filter(|&j| j != target_col).collect();
    let numeric: Vec<bool> = feature_cols
        .iter()
        .map(|&j| matches!(attributes[j].kind, FeatureKind::Numeric))
        .collect();

    let mut raw = Vec::with_capacity(rows.len());
    let mut target_codes = Vec::with_capacity(rows.len());
    for (line_no, fields) in &rows {
        let mut row = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            row.push(parse_value(&fields[j], &attributes[j], *line_no)?);
        }
        raw.push(row);
        match parse_value(&fields[target_col], &attributes[target_col], *line_no)? {
            RawValue::Code(c) => target_codes.push(c),
            _ => return Err(Error::parse(*line_no, "missing target value")),
        }
    }

    let mut counts = vec![0usize; target_levels.len()];
    for &c in &target_codes {
        counts[c] += 1;
    }
    let (positive_label, negative_label) = resolve_labels(&target_levels, &counts, &options.positive)?;
    let positive_code = target_levels
        .iter()
        .position(|l| *l == positive_label)
        .expect("resolved label is a level");
    let labels = target_codes
        .iter()
        .map(|&c| u8::from(c == positive_code))
        .collect();

    let n = raw.len();
    let d = feature_cols.len();
    let data = impute(&numeric, raw);
    let schema = DatasetSchema {
        feature_names: feature_cols.iter().map(|&j| attributes[j].name.clone()).collect(),
        feature_kinds: feature_cols.iter().map(|&j| attributes[j].kind.clone()).collect(),
        target_name: attributes[target_col].name.clone(),
        positive_label,
        negative_label,
    };
    Dataset::new(schema, FeatureMatrix::new(n, d, data)?, labels)
}

fn parse_value(field: &str, attribute: &Attribute, line_no: usize) -> Result<RawValue> {
    if field == "?" {
        return Ok(RawValue::Missing);
    }
    match &attribute.kind {
        FeatureKind::Numeric => field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(RawValue::Number)
            .ok_or_else(|| {
                Error::parse(
                    line_no,
                    format!("`{field}` is not a number (attribute `{}`)", attribute.name),
                )
            }),
        FeatureKind::Nominal(levels) => levels
            .iter()
            .position(|l| l == field)
            .map(RawValue::Code)
            .ok_or_else(|| {
                Error::parse(
                    line_no,
                    format!(
                        "undeclared level `{field}` for nominal attribute `{}`",
                        attribute.name
                    ),
                )
            }),
    }
}
