//! CSV reading and writing in the long panel format.
//!
//! Required columns are `id,t,a,y`; `prob`, `r` and `avail` are optional and
//! every other column becomes a history feature. Missing outcomes are empty
//! fields.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{DecisionRecord, MrtDataset, OptionalColumns, OutcomeKind};
use crate::error::{Error, Result};

const RESERVED: [&str; 7] = ["id", "t", "a", "y", "prob", "r", "avail"];

pub fn read_csv(path: impl AsRef<Path>) -> Result<MrtDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_from(file)
}

fn parse_num<T: std::str::FromStr>(field: &str, column: &str, row: usize) -> Result<T> {
    field.trim().parse().map_err(|_| {
        Error::Schema(format!("row {row}: cannot parse `{field}` in column `{column}`"))
    })
}

fn parse_opt_f64(field: &str, column: &str, row: usize) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_num(field, column, row).map(Some)
    }
}

/// Reads a dataset. The outcome kind is binary when every observed outcome is 0 or 1.
pub fn read_csv_from(reader: impl Read) -> Result<MrtDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        pos(name).ok_or_else(|| Error::Schema(format!("required column `{name}` is missing")))
    };
    let (i_id, i_t, i_a, i_y) = (need("id")?, need("t")?, need("a")?, need("y")?);
    let (i_prob, i_r, i_avail) = (pos("prob"), pos("r"), pos("avail"));
    let features: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !RESERVED.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let id = row[i_id].to_string();
        let individual = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            ids.len() - 1
        });
        let y = parse_opt_f64(&row[i_y], "y", line)?;
        let r = match i_r.map(|i| &row[i]) {
            Some(f) if !f.trim().is_empty() => parse_num(f, "r", line)?,
            _ => u8::from(y.is_some()),
        };
        let available = match i_avail.map(|i| &row[i]) {
            Some(f) if !f.trim().is_empty() => parse_num(f, "avail", line)?,
            _ => 1,
        };
        let prob = match i_prob {
            Some(i) => parse_opt_f64(&row[i], "prob", line)?,
            None => None,
        };
        let history = features
            .iter()
            .map(|(i, name)| parse_num(&row[*i], name, line))
            .collect::<Result<Vec<f64>>>()?;
        records.push(DecisionRecord {
            individual,
            t: parse_num(&row[i_t], "t", line)?,
            a: parse_num(&row[i_a], "a", line)?,
            y,
            r,
            prob,
            available,
            history,
        });
    }
    let binary = records
        .iter()
        .filter_map(|r| r.y)
        .all(|y| y == 0.0 || y == 1.0)
        && records.iter().any(|r| r.y.is_some());
    let kind = if binary { OutcomeKind::Binary } else { OutcomeKind::Continuous };
    let optional = OptionalColumns { prob: i_prob.is_some(), r: i_r.is_some(), avail: i_avail.is_some() };
    MrtDataset::new(features.into_iter().map(|(_, n)| n).collect(), ids, records, kind, optional)
}

pub fn write_csv(dataset: &MrtDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv_to(dataset, file)
}

/// Writes a dataset. Floats use the shortest representation that parses
/// back to the same value.
pub fn write_csv_to(dataset: &MrtDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let opt = dataset.optional_columns();
    let mut header: Vec<&str> = vec!["id", "t", "a", "y"];
    if opt.prob {
        header.push("prob");
    }
    if opt.r {
        header.push("r");
    }
    if opt.avail {
        header.push("avail");
    }
    header.extend(dataset.feature_names().iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for rec in dataset.records() {
        fields.clear();
        fields.push(dataset.ids()[rec.individual].clone());
        fields.push(rec.t.to_string());
        fields.push(rec.a.to_string());
        fields.push(rec.y.map(|y| y.to_string()).unwrap_or_default());
        if opt.prob {
            fields.push(rec.prob.map(|p| p.to_string()).unwrap_or_default());
        }
        if opt.r {
            fields.push(rec.r.to_string());
        }
        if opt.avail {
            fields.push(rec.available.to_string());
        }
        fields.extend(rec.history.iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "id,t,a,y,prob,r,S\nu1,1,1,0.5,0.5,1,1\nu1,2,0,,0.5,0,-1\nu2,1,0,2,0.4,1,1\n";

    #[test]
    fn reads_schema_and_missing_outcomes() {
        let ds = read_csv_from(SAMPLE.as_bytes()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.t_max(), 2);
        assert_eq!(ds.feature_names(), ["S"]);
        assert_eq!(ds.records()[1].y, None);
        assert_eq!(ds.records()[1].r, 0);
        assert_eq!(ds.records()[2].prob, Some(0.4));
        assert_eq!(ds.outcome_kind(), OutcomeKind::Continuous);
    }

    #[test]
    fn writes_back_identically() {
        let ds = read_csv_from(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE);
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let err = read_csv_from("id,t,y\nu,1,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`a`"));
    }

    #[test]
    fn binary_outcomes_detected() {
        let ds = read_csv_from("id,t,a,y\nu,1,1,1\nu,2,0,0\n".as_bytes()).unwrap();
        assert_eq!(ds.outcome_kind(), OutcomeKind::Binary);
    }
}
