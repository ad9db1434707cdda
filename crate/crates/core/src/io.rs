//! CSV readers and writers for traces, spectrograms, fringe images and beat
//! spectra.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write → read cycle is lossless and repeated writes are byte-identical.
//! Parse failures carry the 1-based line and column of the offending cell.

use std::io::{Read, Write};

use crate::beats::BeatSpectrum;
use crate::dynamics::{FringeImage, Spectrogram, TimeTrace};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 2] = ["time_ps", "intensity"];
pub const SPECTRUM_HEADER: [&str; 2] = ["freq_thz", "power"];
/// Corner cell of a spectrogram file.
pub const SPECTROGRAM_CORNER: &str = "time_ps\\energy_meV";
/// Corner cell prefix of a fringe file; the delay follows the `=`.
pub const FRINGE_CORNER_PREFIX: &str = "delay_ps=";

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            column: 0,
            message: format!("{kind:?}"),
        },
    }
}

/// Raw rows with their 1-based line numbers.
fn read_rows(reader: impl Read) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(out.len() + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn number(rec: &csv::StringRecord, line: usize, col: usize) -> Result<f64> {
    let cell = rec.get(col).ok_or_else(|| Error::Parse {
        line,
        column: col + 1,
        message: "missing value".into(),
    })?;
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            column: col + 1,
            message: format!("not a finite number: {cell:?}"),
        }),
    }
}

fn expect_width(rec: &csv::StringRecord, line: usize, width: usize) -> Result<()> {
    if rec.len() != width {
        return Err(Error::Parse {
            line,
            column: rec.len().min(width) + 1,
            message: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    Ok(())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_pairs<W: Write>(out: W, header: [&str; 2], a: &[f64], b: &[f64]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(header).map_err(csv_err)?;
    for (x, y) in a.iter().zip(b) {
        w.write_record([fmt(*x), fmt(*y)]).map_err(csv_err)?;
    }
    flush(w)
}

fn read_pairs(input: impl Read, header: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_rows(input)?;
    let Some((line, head)) = rows.first() else {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty file".into(),
        });
    };
    for (i, name) in header.iter().enumerate() {
        if head.get(i) != Some(*name) {
            return Err(Error::Parse {
                line: *line,
                column: i + 1,
                message: format!("expected header `{}`", header.join(",")),
            });
        }
    }
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    for (line, rec) in &rows[1..] {
        expect_width(rec, *line, 2)?;
        a.push(number(rec, *line, 0)?);
        b.push(number(rec, *line, 1)?);
    }
    Ok((a, b))
}

pub fn write_trace_csv<W: Write>(out: W, trace: &TimeTrace) -> Result<()> {
    write_pairs(out, TRACE_HEADER, &trace.t, &trace.intensity)
}

/// Reads a `time_ps,intensity` file. The grid must be uniform.
pub fn read_trace_csv(input: impl Read) -> Result<TimeTrace> {
    let (t, y) = read_pairs(input, TRACE_HEADER)?;
    TimeTrace::new(t, y)
}

pub fn write_spectrum_csv<W: Write>(out: W, spectrum: &BeatSpectrum) -> Result<()> {
    write_pairs(out, SPECTRUM_HEADER, &spectrum.freq, &spectrum.power)
}

/// Grid file: first row holds `corner` then the column axis, each further
/// row the row-axis value then one value per column.
fn write_grid<W: Write>(out: W, corner: &str, columns: &[f64], rows: &[f64], value: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut w = writer(out);
    let mut head = vec![corner.to_string()];
    head.extend(columns.iter().map(|&c| fmt(c)));
    w.write_record(&head).map_err(csv_err)?;
    let mut buf = Vec::with_capacity(columns.len() + 1);
    for (i, &r) in rows.iter().enumerate() {
        buf.clear();
        buf.push(fmt(r));
        buf.extend((0..columns.len()).map(|j| fmt(value(i, j))));
        w.write_record(&buf).map_err(csv_err)?;
    }
    flush(w)
}

struct Grid {
    corner: String,
    columns: Vec<f64>,
    rows: Vec<f64>,
    /// `values[row][column]`.
    values: Vec<Vec<f64>>,
}

fn read_grid(input: impl Read) -> Result<Grid> {
    let rows = read_rows(input)?;
    let Some((line, head)) = rows.first() else {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty file".into(),
        });
    };
    if head.len() < 2 {
        return Err(Error::Parse {
            line: *line,
            column: 2,
            message: "header needs at least one column value".into(),
        });
    }
    let columns = (1..head.len()).map(|j| number(head, *line, j)).collect::<Result<Vec<_>>>()?;
    let width = head.len();
    let mut axis = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, rec) in &rows[1..] {
        expect_width(rec, *line, width)?;
        axis.push(number(rec, *line, 0)?);
        values.push((1..width).map(|j| number(rec, *line, j)).collect::<Result<Vec<_>>>()?);
    }
    Ok(Grid {
        corner: head[0].to_string(),
        columns,
        rows: axis,
        values,
    })
}

/// First row: energies (meV); first column: time (ps).
pub fn write_spectrogram_csv<W: Write>(out: W, s: &Spectrogram) -> Result<()> {
    write_grid(out, SPECTROGRAM_CORNER, &s.e, &s.t, |i_t, i_e| s.intensity[i_e][i_t])
}

pub fn read_spectrogram_csv(input: impl Read) -> Result<Spectrogram> {
    let g = read_grid(input)?;
    let intensity = (0..g.columns.len())
        .map(|j| g.values.iter().map(|row| row[j]).collect())
        .collect();
    Ok(Spectrogram {
        t: g.rows,
        e: g.columns,
        intensity,
    })
}

/// First row: `delay_ps=<delay>` then energies (meV); first column: pixel.
pub fn write_fringe_csv<W: Write>(out: W, image: &FringeImage) -> Result<()> {
    let corner = format!("{FRINGE_CORNER_PREFIX}{}", fmt(image.delay));
    write_grid(out, &corner, &image.e, &image.x, |i_x, i_e| image.intensity[i_e][i_x])
}

pub fn read_fringe_csv(input: impl Read) -> Result<FringeImage> {
    let g = read_grid(input)?;
    let delay = g
        .corner
        .strip_prefix(FRINGE_CORNER_PREFIX)
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected `{FRINGE_CORNER_PREFIX}<delay>` in the corner cell, found {:?}", g.corner),
        })?;
    let intensity = (0..g.columns.len())
        .map(|j| g.values.iter().map(|row| row[j]).collect())
        .collect();
    Ok(FringeImage {
        x: g.rows,
        e: g.columns,
        intensity,
        delay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> TimeTrace {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|&t| (-t / 3.0f64).exp() * 1e5 + 0.1).collect();
        TimeTrace::new(t, y).unwrap()
    }

    #[test]
    fn trace_round_trip_is_lossless() {
        let tr = trace();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &tr).unwrap();
        assert!(buf.starts_with(b"time_ps,intensity\n"));
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back.t, tr.t);
        assert_eq!(back.intensity, tr.intensity);
        let mut again = Vec::new();
        write_trace_csv(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let text = "time_ps,intensity\n0,1\n0.1,abc\n";
        match read_trace_csv(text.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("{other:?}"),
        }
        match read_trace_csv("time_ps,intensity\n0,1,2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_trace_csv("t,y\n0,1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_trace_csv("".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn spectrogram_round_trip() {
        let s = Spectrogram {
            t: vec![0.0, 0.5, 1.0],
            e: vec![-0.25, 0.0, 0.25, 0.5],
            intensity: (0..4).map(|j| (0..3).map(|i| (i * 10 + j) as f64 / 7.0).collect()).collect(),
        };
        let mut buf = Vec::new();
        write_spectrogram_csv(&mut buf, &s).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.lines().next().unwrap().ends_with(",-0.25,0,0.25,0.5"));
        assert_eq!(read_spectrogram_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn fringe_round_trip_keeps_delay() {
        let img = FringeImage {
            x: (0..5).map(|i| i as f64).collect(),
            e: vec![1.0, 2.0],
            intensity: vec![vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.5; 5]],
            delay: 3.25,
        };
        let mut buf = Vec::new();
        write_fringe_csv(&mut buf, &img).unwrap();
        assert!(buf.starts_with(b"delay_ps=3.25,1,2\n"));
        assert_eq!(read_fringe_csv(buf.as_slice()).unwrap(), img);
        let no_delay = String::from_utf8(buf).unwrap().replacen("delay_ps=3.25", "pixel", 1);
        assert!(matches!(read_fringe_csv(no_delay.as_bytes()), Err(Error::Parse { line: 1, column: 1, .. })));
    }
}
