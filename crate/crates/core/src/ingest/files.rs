//! Documented CSV schemas for station samples, gridded fields and aligned output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use ndarray::Array2;

use super::{GridField, RawSamples};
use crate::error::{Error, Result};
use crate::types::{format_utc, parse_utc, StationMeta, StationSeries, N_VARS, TP, VARIABLES};

const GRID_HEADER: &str = "timestamp,lat0,lon0,dlat,dlon,nlat,nlon";

fn schema(path: &Path, detail: impl Into<String>) -> Error {
    Error::SchemaMismatch {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Parse a per-station sample file with header `timestamp,<variable>`.
///
/// Empty value fields are explicit missing values. Rows that fail to parse are
/// skipped and counted in `malformed_rows`.
pub fn parse_station_csv(path: &Path) -> Result<RawSamples> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => schema(path, format!("{other:?}")),
        })?;
    let headers = rdr.headers()?.clone();
    let variable = match (headers.len(), headers.get(0), headers.get(1)) {
        (2, Some("timestamp"), Some(var)) if VARIABLES.contains(&var) => var.to_string(),
        _ => {
            return Err(schema(
                path,
                format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
            ))
        }
    };

    let mut samples: Vec<(DateTime<Utc>, Option<f64>)> = Vec::new();
    let mut malformed = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = match record {
            Ok(r) if r.len() == 2 => r,
            _ => {
                malformed += 1;
                continue;
            }
        };
        let Ok(t) = parse_utc(&record[0]) else {
            malformed += 1;
            continue;
        };
        let value = match &record[1] {
            "" => None,
            s => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    malformed += 1;
                    continue;
                }
            },
        };
        if let Some((prev, _)) = samples.last() {
            if t <= *prev {
                return Err(Error::UnsortedInput {
                    path: path.to_path_buf(),
                    row: row + 2,
                });
            }
        }
        samples.push((t, value));
    }
    if malformed > 0 {
        log::warn!("{}: skipped {malformed} malformed rows", path.display());
    }
    Ok(RawSamples {
        variable,
        native_step: median_step(&samples),
        samples,
        malformed_rows: malformed,
    })
}

fn median_step(samples: &[(DateTime<Utc>, Option<f64>)]) -> i64 {
    let mut gaps: Vec<i64> = samples.windows(2).map(|w| (w[1].0 - w[0].0).num_seconds()).collect();
    if gaps.is_empty() {
        return crate::types::HOUR_SECS;
    }
    gaps.sort_unstable();
    gaps[gaps.len() / 2]
}

pub fn write_station_csv(path: &Path, raw: &RawSamples) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "timestamp,{}", raw.variable).map_err(io)?;
    for (t, v) in &raw.samples {
        match v {
            Some(v) => writeln!(w, "{},{v}", format_utc(*t)),
            None => writeln!(w, "{},", format_utc(*t)),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read one gridded field. Layout: the literal header line
/// `timestamp,lat0,lon0,dlat,dlon,nlat,nlon`, one line with those values, then
/// `nlat` rows of `nlon` values (row 0 at `lat0`). `NA` marks a missing cell.
pub fn read_grid_csv(path: &Path, variable: &str) -> Result<GridField> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let mut next_line = || -> Result<Option<String>> { lines.next().transpose().map_err(|e| Error::io(path, e)) };
    let mut meta = next_line()?.ok_or_else(|| schema(path, "empty grid file"))?;
    if meta.trim() == GRID_HEADER {
        meta = next_line()?.ok_or_else(|| schema(path, "missing grid metadata line"))?;
    }
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(schema(path, "grid metadata must have 7 fields"));
    }
    let timestamp = parse_utc(fields[0])?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| schema(path, format!("bad number {s:?}")));
    let count = |s: &str| s.parse::<usize>().map_err(|_| schema(path, format!("bad count {s:?}")));
    let (lat0, lon0, dlat, dlon) = (num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?);
    let (nlat, nlon) = (count(fields[5])?, count(fields[6])?);

    let mut values = Vec::with_capacity(nlat * nlon);
    for r in 0..nlat {
        let line = next_line()?.ok_or_else(|| schema(path, format!("expected {nlat} grid rows, got {r}")))?;
        let row: Vec<&str> = line.split(',').map(str::trim).collect();
        if row.len() != nlon {
            return Err(schema(
                path,
                format!("grid row {r} has {} values, expected {nlon}", row.len()),
            ));
        }
        for cell in row {
            values.push(if cell == "NA" { f64::NAN } else { num(cell)? });
        }
    }
    let values = Array2::from_shape_vec((nlat, nlon), values).map_err(|e| schema(path, e.to_string()))?;
    GridField::new(timestamp, variable, (lat0, lon0), (dlat, dlon), values).map_err(|e| schema(path, e.to_string()))
}

pub fn write_grid_csv(path: &Path, field: &GridField) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "{GRID_HEADER}").map_err(io)?;
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        format_utc(field.timestamp),
        field.lat0,
        field.lon0,
        field.dlat,
        field.dlon,
        field.nlat(),
        field.nlon()
    )
    .map_err(io)?;
    for row in field.values.rows() {
        let cells: Vec<String> = row
            .iter()
            .map(|&v| {
                if field.is_missing(v) {
                    "NA".to_string()
                } else {
                    v.to_string()
                }
            })
            .collect();
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Write `timestamp,t2m,sp,rh,wind_speed,pwv,tp`, one row per hour; missing entries empty.
pub fn write_aligned_csv(path: &Path, series: &StationSeries) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "timestamp,{}", VARIABLES.join(",")).map_err(io)?;
    for (i, (row, miss)) in series.data.rows().into_iter().zip(series.missing.rows()).enumerate() {
        let mut line = format_utc(series.time_at(i));
        for (v, m) in row.iter().zip(miss.iter()) {
            line.push(',');
            if !m {
                line.push_str(&v.to_string());
            }
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read an aligned station file. Rows must be consecutive hours.
pub fn read_aligned_csv(path: &Path, meta: StationMeta) -> Result<StationSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => schema(path, format!("{other:?}")),
        })?;
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("timestamp").chain(VARIABLES).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(schema(path, format!("expected header {}", expected.join(","))));
    }
    let mut start = None;
    let mut data = Vec::new();
    let mut missing = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let t = parse_utc(&record[0])?;
        let start = *start.get_or_insert(t);
        if (t - start).num_hours() != row as i64 || (t - start).num_seconds() % 3600 != 0 {
            return Err(Error::UnsortedInput {
                path: path.to_path_buf(),
                row: row + 2,
            });
        }
        for field in record.iter().skip(1) {
            if field.is_empty() {
                data.push(f64::NAN);
                missing.push(true);
            } else {
                data.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| schema(path, format!("bad value {field:?} in row {}", row + 2)))?,
                );
                missing.push(false);
            }
        }
    }
    let start = start.ok_or(Error::Empty("aligned series"))?;
    let t = data.len() / N_VARS;
    let data = Array2::from_shape_vec((t, N_VARS), data).expect("row length checked by csv reader");
    let missing = Array2::from_shape_vec((t, N_VARS), missing).expect("same shape as data");
    let qc_applied = !missing.iter().any(|&m| m);
    let series = StationSeries {
        meta,
        start_time: start,
        data,
        missing,
        qc_applied,
    };
    if series.data.column(TP).iter().any(|&v| v < 0.0) {
        return Err(schema(path, "negative precipitation"));
    }
    series.validate()?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn parses_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "timestamp,pwv\n2020-01-01T00:00:00Z,10.5\n2020-01-01T00:05:00Z,\n",
        );
        let raw = parse_station_csv(&p).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.samples[1].1, None);
        assert_eq!(raw.native_step, 300);
    }

    #[test]
    fn twelve_five_minute_rows_infer_300s() {
        let dir = tempfile::tempdir().unwrap();
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let mut body = String::from("timestamp,pwv\n");
        for k in 0..12 {
            body.push_str(&format!("{},20\n", format_utc(t0 + Duration::minutes(5 * k))));
        }
        let raw = parse_station_csv(&write(&dir, "b.csv", &body)).unwrap();
        assert_eq!(raw.native_step, 300);
    }

    #[test]
    fn duplicate_timestamp_is_unsorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.csv",
            "timestamp,pwv\n2020-01-01T00:00:00Z,1\n2020-01-01T00:00:00Z,2\n",
        );
        let err = parse_station_csv(&p).unwrap_err();
        assert!(err.to_string().contains("unsorted input"), "{err}");
    }

    #[test]
    fn unknown_header_is_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "time,ztd\n2020-01-01T00:00:00Z,1\n");
        let err = parse_station_csv(&p).unwrap_err();
        assert!(err.to_string().contains("schema mismatch"), "{err}");
        assert!(err.is_schema_error());
    }

    #[test]
    fn malformed_rows_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.csv",
            "timestamp,pwv\n2020-01-01T00:00:00Z,1\nnot-a-time,2\n2020-01-01T01:00:00Z,abc\n2020-01-01T02:00:00Z,3\n",
        );
        let raw = parse_station_csv(&p).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.malformed_rows, 2);
    }

    #[test]
    fn grid_roundtrip_with_na() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "g.csv",
            "timestamp,lat0,lon0,dlat,dlon,nlat,nlon\n2020-01-01T00:00:00Z,22.0,114.0,0.1,0.1,2,3\n1,2,NA\n4,5,6\n",
        );
        let g = read_grid_csv(&p, "tp").unwrap();
        assert_eq!((g.nlat(), g.nlon()), (2, 3));
        assert!(g.values[[0, 2]].is_nan());
        let q = dir.path().join("g2.csv");
        write_grid_csv(&q, &g).unwrap();
        let g2 = read_grid_csv(&q, "tp").unwrap();
        assert_eq!(
            (g2.lat0, g2.lon0, g2.dlat, g2.timestamp),
            (g.lat0, g.lon0, g.dlat, g.timestamp)
        );
        assert!(g2.values[[0, 2]].is_nan());
        assert_eq!(g2.values[[1, 2]], 6.0);
    }

    #[test]
    fn grid_row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "h.csv", "2020-01-01T00:00:00Z,0,0,0.1,0.1,2,2\n1,2\n");
        assert!(matches!(read_grid_csv(&p, "tp"), Err(Error::SchemaMismatch { .. })));
    }
}
