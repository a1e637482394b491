//! Long-format CSV ingestion and plot-ready CSV outputs.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{validate_dataset, PanelDataset, RawObservation};
use crate::summary::{ClusterCurve, TransitionTable};

const FIXED_COLUMNS: [&str; 4] = ["participant_id", "period", "time", "y"];

/// Column layout resolved from a header row.
struct Layout {
    z: Vec<usize>,
    x: Vec<usize>,
}

fn numbered(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        if let Some(k) = name.trim().strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok()) {
            found.push((k, col));
        }
    }
    found.sort_unstable();
    for (expect, &(k, _)) in found.iter().enumerate() {
        if k != expect + 1 {
            return Err(Error::Parse { line: 1, msg: format!("{prefix} columns must be numbered {prefix}1..{prefix}{}", found.len()) });
        }
    }
    Ok(found.into_iter().map(|(_, c)| c).collect())
}

fn layout(header: &csv::StringRecord) -> Result<Layout> {
    for (k, want) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(k).map(str::trim) != Some(*want) {
            return Err(Error::Parse { line: 1, msg: format!("header must start with {}", FIXED_COLUMNS.join(",")) });
        }
    }
    let z = numbered(header, "z")?;
    let x = numbered(header, "x")?;
    if 4 + z.len() + x.len() != header.len() {
        return Err(Error::Parse { line: 1, msg: "unrecognised header column".into() });
    }
    Ok(Layout { z, x })
}

/// Parse rows of `participant_id,period,time,y,z1..,x1..`.
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<RawObservation>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    let lay = layout(&header)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize| -> Result<&str> {
            rec.get(col).map(str::trim).ok_or_else(|| Error::Parse { line, msg: format!("missing column {}", col + 1) })
        };
        let num = |col: usize| -> Result<f64> {
            let s = field(col)?;
            s.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("'{s}' in column {} is not a number", header[col].trim()) })
        };
        let int = |col: usize| -> Result<i64> {
            let s = field(col)?;
            s.parse::<i64>().map_err(|_| Error::Parse { line, msg: format!("'{s}' in column {} is not an integer", header[col].trim()) })
        };
        let y = num(3)?;
        if y != 0.0 && y != 1.0 {
            return Err(Error::Parse { line, msg: format!("y must be 0 or 1, got {y}") });
        }
        rows.push(RawObservation {
            participant: int(0)?,
            period: int(1)?,
            time: num(2)?,
            y,
            z: lay.z.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            x: lay.x.iter().map(|&c| num(c)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

pub fn read_dataset(path: &Path) -> Result<PanelDataset> {
    validate_dataset(&read_rows(std::fs::File::open(path)?)?)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

/// Write rows in the ingestion format; floats use shortest round-trip text.
pub fn write_rows<W: Write>(writer: W, rows: &[RawObservation]) -> Result<()> {
    let (d_z, d_x) = rows.first().map_or((0, 0), |r| (r.z.len(), r.x.len()));
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=d_z).map(|k| format!("z{k}")));
    header.extend((1..=d_x).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.participant.to_string(), r.period.to_string(), r.time.to_string(), r.y.to_string()];
        rec.extend(r.z.iter().chain(&r.x).map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &PanelDataset) -> Result<()> {
    write_rows(std::fs::File::create(path)?, &data.to_rows())
}

/// `cluster,time,mean,lower,upper` in original time units.
pub fn write_curves<W: Write>(writer: W, curves: &[ClusterCurve], grid: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cluster", "time", "mean", "lower", "upper"]).map_err(csv_err)?;
    for c in curves {
        for (k, t) in grid.iter().enumerate() {
            w.write_record([c.cluster.to_string(), t.to_string(), c.mean[k].to_string(), c.lower[k].to_string(), c.upper[k].to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `from_period,to_period,from_cluster,to_cluster,count`, one row per
/// table cell; periods are the dataset's identifiers.
pub fn write_transitions<W: Write>(writer: W, tables: &[TransitionTable], period_ids: &[i64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["from_period", "to_period", "from_cluster", "to_cluster", "count"]).map_err(csv_err)?;
    for t in tables {
        for (r, row) in t.counts.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                w.write_record([
                    period_ids[t.from_period].to_string(),
                    period_ids[t.from_period + 1].to_string(),
                    t.labels[r].to_string(),
                    t.labels[c].to_string(),
                    v.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `participant_id,period,cluster` for a period-major labeling.
pub fn write_partition<W: Write>(writer: W, labels: &[u32], participant_ids: &[i64], period_ids: &[i64]) -> Result<()> {
    let n = participant_ids.len();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant_id", "period", "cluster"]).map_err(csv_err)?;
    for (j, &pid) in period_ids.iter().enumerate() {
        for (i, &id) in participant_ids.iter().enumerate() {
            w.write_record([id.to_string(), pid.to_string(), labels[j * n + i].to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "participant_id,period,time,y,z1,x1\n1,1,0.1,0,0.5,1\n1,1,0.7,1,0.5,1\n2,1,0.2,1,-1,1\n";

    #[test]
    fn parses_and_round_trips() {
        let rows = read_rows(SAMPLE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].z, vec![-1.0]);
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn exact_float_round_trip() {
        let mut rows = read_rows(SAMPLE.as_bytes()).unwrap();
        rows[0].time = 0.1 + 0.2;
        rows[0].z[0] = std::f64::consts::PI / 7.0;
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = "participant_id,period,time,y\n1,1,0.1,0\n1,1,abc,1\n";
        match read_rows(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_y = "participant_id,period,time,y\n1,1,0.1,2\n";
        assert!(matches!(read_rows(bad_y.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad_header = "id,period,time,y\n";
        assert!(matches!(read_rows(bad_header.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let gap = "participant_id,period,time,y,z2\n";
        assert!(read_rows(gap.as_bytes()).is_err());
        let short = "participant_id,period,time,y,z1\n1,1,0.5,1\n";
        assert!(matches!(read_rows(short.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn covariate_blocks_may_be_absent() {
        let rows = read_rows("participant_id,period,time,y\n1,1,0.5,1\n".as_bytes()).unwrap();
        assert!(rows[0].z.is_empty() && rows[0].x.is_empty());
    }
}
