//! CSV / JSON-lines ingestion and export, one row per (series, time).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

use super::record::{check_id, SeriesRecord};
use super::schema::{ColumnGroup, ColumnKind, FeatureSchema, SERIES_ID_COLUMN, TIME_COLUMN};

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<SeriesRecord>,
    /// Series dropped for being shorter than T + L.
    pub skipped_short: usize,
    pub warnings: Vec<String>,
}

struct RawRow {
    t: i64,
    line: usize,
    values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    JsonLines,
}

fn format_of(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") | Some("ndjson") => Format::JsonLines,
        _ => Format::Csv,
    }
}

/// Reads a CSV or JSON-lines file (by extension) into validated records,
/// sorted by series id.
pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<LoadReport> {
    schema.validate()?;
    let path = path.as_ref();
    let rows = match format_of(path) {
        Format::Csv => read_csv(path, schema)?,
        Format::JsonLines => read_jsonl(path, schema)?,
    };
    let mut report = LoadReport::default();
    if rows.is_empty() {
        let msg = format!("{}: no data rows", path.display());
        log::warn!("{msg}");
        report.warnings.push(msg);
        return Ok(report);
    }
    for (id, rows) in rows {
        match assemble(&id, rows, schema)? {
            Some(rec) => report.records.push(rec),
            None => report.skipped_short += 1,
        }
    }
    if report.skipped_short > 0 {
        let msg = format!(
            "skipped {} series shorter than T+L = {}",
            report.skipped_short,
            schema.window_len()
        );
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    Ok(report)
}

fn parse_cell(raw: &str, column: &str, line: usize) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| {
        Error::Data(format!(
            "line {line}: non-numeric value `{s}` in column `{column}`"
        ))
    })
}

fn read_csv(path: &Path, schema: &FeatureSchema) -> Result<BTreeMap<String, Vec<RawRow>>> {
    let mut out: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    if std::fs::metadata(path)?.len() == 0 {
        return Ok(out);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_ix = find(SERIES_ID_COLUMN)?;
    let t_ix = find(TIME_COLUMN)?;
    let col_ix = schema
        .columns
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>>>()?;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let id = rec.get(id_ix).unwrap_or("").to_string();
        let t = rec
            .get(t_ix)
            .and_then(|s| s.trim().parse::<i64>().ok())
            .ok_or_else(|| Error::Data(format!("line {line}: bad time index")))?;
        let values = schema
            .columns
            .iter()
            .zip(&col_ix)
            .map(|(c, &i)| parse_cell(rec.get(i).unwrap_or(""), &c.name, line))
            .collect::<Result<Vec<_>>>()?;
        out.entry(id).or_default().push(RawRow { t, line, values });
    }
    Ok(out)
}

fn read_jsonl(path: &Path, schema: &FeatureSchema) -> Result<BTreeMap<String, Vec<RawRow>>> {
    let mut out: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    let reader = BufReader::new(File::open(path)?);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Value = serde_json::from_str(&line)?;
        let obj = obj
            .as_object()
            .ok_or_else(|| Error::Data(format!("line {lineno}: expected a JSON object")))?;
        let id = match obj.get(SERIES_ID_COLUMN) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(x)) => x.to_string(),
            _ => return Err(Error::MissingColumn(SERIES_ID_COLUMN.into())),
        };
        let t = obj
            .get(TIME_COLUMN)
            .and_then(Value::as_i64)
            .ok_or_else(|| Error::MissingColumn(TIME_COLUMN.into()))?;
        let mut values = Vec::with_capacity(schema.columns.len());
        for c in &schema.columns {
            let v = match obj.get(&c.name) {
                None | Some(Value::Null) => None,
                Some(Value::Number(x)) => x.as_f64(),
                Some(Value::String(s)) => parse_cell(s, &c.name, lineno)?,
                Some(other) => {
                    return Err(Error::Data(format!(
                        "line {lineno}: non-numeric value `{other}` in column `{}`",
                        c.name
                    )))
                }
            };
            values.push(v);
        }
        out.entry(id).or_default().push(RawRow {
            t,
            line: lineno,
            values,
        });
    }
    Ok(out)
}

/// Turns the rows of one series into a record, or `None` when too short.
fn assemble(
    id: &str,
    mut rows: Vec<RawRow>,
    schema: &FeatureSchema,
) -> Result<Option<SeriesRecord>> {
    rows.sort_by_key(|r| r.t);
    for w in rows.windows(2) {
        if w[1].t != w[0].t + 1 {
            return Err(Error::Data(format!(
                "series `{id}`: gap or duplicate between t={} and t={} (line {})",
                w[0].t, w[1].t, w[1].line
            )));
        }
    }
    let n = rows.len();
    let l = schema.horizon;
    if n < schema.window_len() {
        return Ok(None);
    }

    let stat_cols: Vec<usize> = col_indices(schema, ColumnGroup::Statistic);
    let know_cols: Vec<usize> = col_indices(schema, ColumnGroup::Knowledge);
    let target_cols: Vec<usize> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_target)
        .map(|(i, _)| i)
        .collect();

    let observed = |r: &RawRow| target_cols.iter().all(|&c| r.values[c].is_some());
    let n_obs = rows.iter().take_while(|r| observed(r)).count();
    if rows[n_obs..]
        .iter()
        .any(|r| target_cols.iter().any(|&c| r.values[c].is_some()))
    {
        return Err(Error::Data(format!(
            "series `{id}`: missing target values before the last row"
        )));
    }
    if n_obs != n && n_obs != n - l {
        return Err(Error::Data(format!(
            "series `{id}`: {} trailing rows without targets, expected 0 or {l}",
            n - n_obs
        )));
    }

    let mut knowledge = Vec::with_capacity(n);
    for r in &rows {
        let mut row = Vec::with_capacity(know_cols.len());
        for &c in &know_cols {
            let spec = &schema.columns[c];
            let v = r.values[c].ok_or_else(|| {
                Error::Data(format!(
                    "series `{id}` line {}: knowledge column `{}` is empty",
                    r.line, spec.name
                ))
            })?;
            if spec.kind == ColumnKind::Id {
                check_id(&spec.name, v, spec.vocab_size.unwrap_or(0))?;
            }
            row.push(v);
        }
        knowledge.push(row);
    }
    let mut statistics = Vec::with_capacity(n - l);
    for r in &rows[..n - l] {
        let mut row = Vec::with_capacity(stat_cols.len());
        for &c in &stat_cols {
            row.push(r.values[c].ok_or_else(|| {
                Error::Data(format!(
                    "series `{id}` line {}: statistic `{}` is empty inside the history",
                    r.line, schema.columns[c].name
                ))
            })?);
        }
        statistics.push(row);
    }
    let targets = rows[..n_obs]
        .iter()
        .map(|r| target_cols.iter().map(|&c| r.values[c].unwrap()).collect())
        .collect();
    let rec = SeriesRecord {
        series_id: id.to_string(),
        start: rows[0].t,
        statistics,
        knowledge,
        targets,
    };
    rec.validate(schema)?;
    Ok(Some(rec))
}

fn col_indices(schema: &FeatureSchema, group: ColumnGroup) -> Vec<usize> {
    schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.group == group)
        .map(|(i, _)| i)
        .collect()
}

/// Writes records as CSV or JSON lines (by extension). Statistics that are
/// unknown (horizon rows, non-target columns) are left empty / omitted.
pub fn write_dataset(
    path: impl AsRef<Path>,
    records: &[SeriesRecord],
    schema: &FeatureSchema,
) -> Result<()> {
    let path = path.as_ref();
    let stat_names: Vec<&str> = schema
        .statistic_columns()
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    let target_pos = schema.target_positions();
    let know_names: Vec<&str> = schema
        .knowledge_columns()
        .iter()
        .map(|c| c.name.as_str())
        .collect();

    // Per-row cells in schema order.
    let cells = |rec: &SeriesRecord, i: usize| -> Vec<(String, Option<f64>)> {
        let mut stat_vals: Vec<Option<f64>> = vec![None; stat_names.len()];
        if let Some(row) = rec.statistics.get(i) {
            for (j, v) in row.iter().enumerate() {
                stat_vals[j] = Some(*v);
            }
        }
        if let Some(row) = rec.targets.get(i) {
            for (d, &j) in target_pos.iter().enumerate() {
                stat_vals[j] = Some(row[d]);
            }
        }
        let mut out = Vec::with_capacity(schema.columns.len());
        let (mut si, mut ki) = (0, 0);
        for c in &schema.columns {
            match c.group {
                ColumnGroup::Statistic => {
                    out.push((c.name.clone(), stat_vals[si]));
                    si += 1;
                }
                ColumnGroup::Knowledge => {
                    out.push((c.name.clone(), Some(rec.knowledge[i][ki])));
                    ki += 1;
                }
            }
        }
        debug_assert_eq!(ki, know_names.len());
        out
    };

    let mut w = BufWriter::new(File::create(path)?);
    match format_of(path) {
        Format::Csv => {
            let mut header = vec![SERIES_ID_COLUMN.to_string(), TIME_COLUMN.to_string()];
            header.extend(schema.columns.iter().map(|c| c.name.clone()));
            writeln!(w, "{}", header.join(","))?;
            for rec in records {
                for i in 0..rec.len() {
                    let mut line = format!("{},{}", rec.series_id, rec.start + i as i64);
                    for (_, v) in cells(rec, i) {
                        line.push(',');
                        if let Some(v) = v {
                            line.push_str(&v.to_string());
                        }
                    }
                    writeln!(w, "{line}")?;
                }
            }
        }
        Format::JsonLines => {
            for rec in records {
                for i in 0..rec.len() {
                    let mut obj = serde_json::Map::new();
                    obj.insert(
                        SERIES_ID_COLUMN.into(),
                        Value::String(rec.series_id.clone()),
                    );
                    obj.insert(TIME_COLUMN.into(), Value::from(rec.start + i as i64));
                    for (name, v) in cells(rec, i) {
                        if let Some(v) = v {
                            obj.insert(name, Value::from(v));
                        }
                    }
                    writeln!(w, "{}", Value::Object(obj))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
