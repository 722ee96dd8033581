use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::IoError;
use crate::geometry::SizeClass;
use crate::io::fmt_sig;
use crate::metrics::MetricKind;
use crate::shift::{Histogram, SweepCurve};

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map(|p| p.line() as usize);
    match line {
        Some(line) => IoError::record(path, line, e.to_string()),
        None => IoError::parse(path, e.to_string()),
    }
}

/// Header `metric,box_size,offset,value`, one row per sample.
pub fn write_sweep_csv<W: Write>(w: W, curves: &[SweepCurve]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["metric", "box_size", "offset", "value"])?;
    for c in curves {
        for &(d, v) in &c.samples {
            wr.write_record([c.metric.name().to_string(), fmt_sig(c.box_size), fmt_sig(d), fmt_sig(v)])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct SweepRow {
    metric: MetricKind,
    box_size: f64,
    offset: f64,
    value: f64,
}

/// Consecutive rows sharing `(metric, box_size)` form one curve.
pub fn read_sweep_csv<R: Read>(r: R, path: &Path) -> Result<Vec<SweepCurve>, IoError> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["metric", "box_size", "offset", "value"] {
        return Err(IoError::parse(path, format!("unexpected header {:?}", headers)));
    }
    let mut curves: Vec<SweepCurve> = Vec::new();
    for row in rd.deserialize::<SweepRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        match curves.last_mut() {
            Some(c) if c.metric == row.metric && c.box_size == row.box_size => c.samples.push((row.offset, row.value)),
            _ => curves.push(SweepCurve {
                metric: row.metric,
                box_size: row.box_size,
                samples: vec![(row.offset, row.value)],
            }),
        }
    }
    Ok(curves)
}

/// Header `bin,count`.
pub fn write_histogram_csv<W: Write>(w: W, counts: &[u64]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["bin", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        wr.write_record([i.to_string(), c.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct HistRow {
    bin: usize,
    count: f64,
}

/// Reads `bin,count` rows into a `bins`-bin histogram. Missing bins count as
/// zero; repeated bins accumulate.
pub fn read_histogram_csv<R: Read>(r: R, path: &Path, bins: usize) -> Result<Histogram, IoError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut counts = vec![0.0; bins];
    for (i, row) in rd.deserialize::<HistRow>().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        // header is line 1
        let line = i + 2;
        if row.bin >= bins {
            return Err(IoError::record(path, line, format!("bin {} outside 0..{bins}", row.bin)));
        }
        if !(row.count >= 0.0 && row.count.is_finite()) {
            return Err(IoError::record(path, line, format!("bad count {}", row.count)));
        }
        counts[row.bin] += row.count;
    }
    Histogram::from_counts(&counts).map_err(|e| IoError::parse(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRow {
    pub rel_w: f64,
    pub rel_h: f64,
    pub size_class: SizeClass,
}

/// Header `rel_w,rel_h,size_class`.
pub fn write_size_rows<W: Write>(w: W, rows: &[SizeRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["rel_w", "rel_h", "size_class"])?;
    for r in rows {
        wr.write_record([fmt_sig(r.rel_w), fmt_sig(r.rel_h), r.size_class.as_str().to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
