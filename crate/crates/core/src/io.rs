//! CSV readers for the three input layouts.
//!
//! Files are comma separated with a mandatory header; columns are matched by
//! name so their order is free and extra columns are ignored. Row numbers in
//! errors count the header as row 1.

use std::io::Read;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::crossover::{CrossoverRow, Group};
use crate::error::{Error, Result};

/// Column positions of `names` in the header.
fn locate(header: &StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Parse {
                    row: 1,
                    message: format!(
                        "header must name the columns {}; missing {name:?}",
                        names.join(",")
                    ),
                })
        })
        .collect()
}

fn parse_error(row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        message: message.into(),
    }
}

fn number(field: &str, column: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(row, format!("{column}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(row, format!("{column}: {field:?} is not finite")));
    }
    Ok(v)
}

/// Streams records with their 1-based row numbers.
fn records<R: Read>(input: R, names: &[&str], mut row_fn: impl FnMut(&StringRecord, &[usize], usize) -> Result<()>) -> Result<()> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| parse_error(1, e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(parse_error(1, "missing header row"));
    }
    let cols = locate(&header, names)?;
    let mut record = StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            parse_error(row, e.to_string())
        })?;
        if !more {
            break;
        }
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(parse_error(
                row,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        row_fn(&record, &cols, row)?;
    }
    Ok(())
}

/// Reads `x,y` pairs.
pub fn read_ratio_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    records(input, &["x", "y"], |rec, c, row| {
        out.push((number(&rec[c[0]], "x", row)?, number(&rec[c[1]], "y", row)?));
        Ok(())
    })?;
    Ok(out)
}

/// Reads `unit_id,value` observations.
pub fn read_cluster_csv<R: Read>(input: R) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    records(input, &["unit_id", "value"], |rec, c, row| {
        let id = &rec[c[0]];
        if id.is_empty() {
            return Err(parse_error(row, "unit_id is empty"));
        }
        out.push((id.to_string(), number(&rec[c[1]], "value", row)?));
        Ok(())
    })?;
    Ok(out)
}

/// Reads `user_id,group,period,value` cells. Groups are `I`/`II` (or `1`/`2`,
/// any case); periods are `1` or `2`.
pub fn read_crossover_csv<R: Read>(input: R) -> Result<Vec<CrossoverRow>> {
    let mut out = Vec::new();
    records(input, &["user_id", "group", "period", "value"], |rec, c, row| {
        let user = &rec[c[0]];
        if user.is_empty() {
            return Err(parse_error(row, "user_id is empty"));
        }
        let group: Group = rec[c[1]]
            .parse()
            .map_err(|_| parse_error(row, format!("group: {:?} is not I or II", &rec[c[1]])))?;
        let period = match &rec[c[2]] {
            "1" => 1,
            "2" => 2,
            other => return Err(parse_error(row, format!("period: {other:?} is not 1 or 2"))),
        };
        out.push(CrossoverRow {
            user: user.to_string(),
            group,
            period,
            value: number(&rec[c[3]], "value", row)?,
        });
        Ok(())
    })?;
    Ok(out)
}
