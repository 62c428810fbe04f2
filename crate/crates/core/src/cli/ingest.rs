//! CSV ingestion and emission for the three input schemas.

use std::io::{Read, Write};

use thiserror::Error;

use crate::harness::synthetic::fixed_point;
use crate::kernels::{Label, Sample, ScoredPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// Header `x`.
    Scalar,
    /// Header `y,z`.
    Bivariate,
    /// Header `score,label`; scores in `[0, 1]`, labels `+1` / `-1`
    /// (`1`, `0` and `-1` are accepted, `0` meaning negative).
    ScoredLabeled,
}

impl Schema {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Schema::Scalar => &["x"],
            Schema::Bivariate => &["y", "z"],
            Schema::ScoredLabeled => &["score", "label"],
        }
    }

    /// Schema whose header matches exactly.
    pub fn detect(header: &[&str]) -> Option<Self> {
        [Schema::Scalar, Schema::Bivariate, Schema::ScoredLabeled]
            .into_iter()
            .find(|s| s.header() == header)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("header {found:?} does not match any schema (x | y,z | score,label)")]
    Schema { found: Vec<String> },
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("no data rows")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// Scores are discretized to `2^score_bits` levels.
    pub score_bits: u8,
    /// Inclusive bounds for `x`, `y` and `z`.
    pub range: Option<(f64, f64)>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            score_bits: 16,
            range: None,
        }
    }
}

fn parse_value(field: &str, line: u64, range: Option<(f64, f64)>) -> Result<f64, IngestError> {
    let err = |msg: String| IngestError::Parse { line, msg };
    let v: f64 = field.trim().parse().map_err(|_| err(format!("{field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(err(format!("{field:?} is not finite")));
    }
    if let Some((lo, hi)) = range {
        if v < lo || v > hi {
            return Err(err(format!("{v} outside [{lo}, {hi}]")));
        }
    }
    Ok(v)
}

fn parse_label(field: &str, line: u64) -> Result<Label, IngestError> {
    match field.trim() {
        "1" | "+1" | "1.0" => Ok(Label::Positive),
        "-1" | "0" | "-1.0" | "0.0" => Ok(Label::Negative),
        other => Err(IngestError::Parse {
            line,
            msg: format!("label {other:?} is not one of +1, -1"),
        }),
    }
}

/// Reads a headed CSV. The schema is taken from the header unless `expect`
/// pins it.
pub fn ingest_csv<R: Read>(input: R, expect: Option<Schema>, opts: IngestOptions) -> Result<Sample, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let schema = match Schema::detect(&names) {
        Some(s) if expect.is_none_or(|e| e == s) => s,
        _ => return Err(IngestError::Schema { found: header }),
    };
    let d = 1u64 << opts.score_bits;
    let mut sample = match schema {
        Schema::Scalar => Sample::Scalar(Vec::new()),
        Schema::Bivariate => Sample::Bivariate(Vec::new()),
        Schema::ScoredLabeled => Sample::Scored(Vec::new()),
    };
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(IngestError::Parse {
                line,
                msg: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        match &mut sample {
            Sample::Scalar(xs) => xs.push(parse_value(&record[0], line, opts.range)?),
            Sample::Bivariate(ps) => ps.push((
                parse_value(&record[0], line, opts.range)?,
                parse_value(&record[1], line, opts.range)?,
            )),
            Sample::Scored(ps) => {
                let s = parse_value(&record[0], line, Some((0.0, 1.0)))?;
                ps.push(ScoredPoint {
                    score: fixed_point(s, d),
                    label: parse_label(&record[1], line)?,
                });
            }
        }
    }
    if sample.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(sample)
}

/// Writes a sample in its schema. Scores are written as bin centers so that
/// reading them back with the same `score_bits` recovers the same bins.
pub fn emit_csv<W: Write>(sample: &Sample, score_bits: u8, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let d = (1u64 << score_bits) as f64;
    match sample {
        Sample::Scalar(xs) => {
            w.write_record(Schema::Scalar.header())?;
            for x in xs {
                w.write_record([x.to_string()])?;
            }
        }
        Sample::Bivariate(ps) => {
            w.write_record(Schema::Bivariate.header())?;
            for (y, z) in ps {
                w.write_record([y.to_string(), z.to_string()])?;
            }
        }
        Sample::Scored(ps) => {
            w.write_record(Schema::ScoredLabeled.header())?;
            for p in ps {
                w.write_record([((p.score as f64 + 0.5) / d).to_string(), p.label.sign().to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
