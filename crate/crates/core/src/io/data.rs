//! CSV input schemas and deterministic CSV/JSON output.
//!
//! Input files have a header row; `#` starts a comment line. Columns are
//! matched by name, extra columns are ignored.

use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

use crate::characterization::ReflectivityPoint;
use crate::error::{Error, Result};
use crate::mechanics::Peak;

/// Named numeric columns of a CSV table; optional columns are `None` when
/// absent from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Option<Vec<f64>>>,
    /// File line of every data row.
    pub lines: Vec<u64>,
}

/// Reads `required` and `optional` columns. Empty optional cells become NaN.
pub fn read_table<R: Read>(reader: R, required: &[&str], optional: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut index = Vec::new();
    for name in required {
        let i = find(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!(
                "missing column `{name}` (found: {}); expected columns {}",
                header.iter().collect::<Vec<_>>().join(", "),
                required.join(", ")
            ),
        })?;
        index.push(Some(i));
    }
    index.extend(optional.iter().map(|n| find(n)));
    let names: Vec<&str> = required.iter().chain(optional).copied().collect();
    let mut columns: Vec<Option<Vec<f64>>> = index.iter().map(|i| i.map(|_| Vec::new())).collect();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        for (k, idx) in index.iter().enumerate() {
            let Some(i) = idx else { continue };
            let cell = record.get(*i).unwrap_or("");
            let value = if cell.is_empty() && k >= required.len() {
                f64::NAN
            } else {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column `{}`: `{cell}` is not a finite number", names[k]),
                })?
            };
            columns[k].as_mut().expect("present column").push(value);
        }
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(Table { columns, lines })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, message: format!("{kind:?}") },
    }
}

pub fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Two required columns as `(x, y)`.
pub fn read_xy<R: Read>(reader: R, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut t = read_table(reader, &[x, y], &[])?;
    let ys = t.columns.pop().flatten().expect("required");
    let xs = t.columns.pop().flatten().expect("required");
    Ok((xs, ys))
}

/// `wavelength_m,reflectivity[,sigma]`.
pub fn read_reflectivity<R: Read>(reader: R) -> Result<Vec<ReflectivityPoint>> {
    let t = read_table(reader, &["wavelength_m", "reflectivity"], &["sigma"])?;
    let w = t.columns[0].as_ref().expect("required");
    let r = t.columns[1].as_ref().expect("required");
    Ok((0..w.len())
        .map(|i| ReflectivityPoint {
            wavelength: w[i],
            reflectivity: r[i],
            sigma: t.columns[2].as_ref().map(|s| s[i]).filter(|s| s.is_finite()),
        })
        .collect())
}

/// `frequency_hz,membrane,m,n[,q]`.
pub fn read_peaks<R: Read>(reader: R) -> Result<Vec<Peak>> {
    let t = read_table(reader, &["frequency_hz", "membrane", "m", "n"], &["q"])?;
    let col = |k: usize| t.columns[k].as_ref().expect("required");
    let integer = |v: f64, line: u64, name: &str| -> Result<u32> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(Error::Parse { line, message: format!("column `{name}`: {v} is not a non-negative integer") })
        }
    };
    (0..t.lines.len())
        .map(|i| {
            let line = t.lines[i];
            Ok(Peak {
                frequency_hz: col(0)[i],
                membrane: integer(col(1)[i], line, "membrane")? as usize,
                m: integer(col(2)[i], line, "m")?,
                n: integer(col(3)[i], line, "n")?,
                quality_factor: t.columns[4].as_ref().map(|q| q[i]).filter(|q| q.is_finite()),
            })
        })
        .collect()
}

/// Writes a header and rows of numbers/strings.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvOut<W> {
    pub fn new(writer: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().from_writer(writer);
        inner.write_record(header).map_err(csv_error)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(cells).map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation; `NaN` for missing values.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

pub fn write_json<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(writer)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_with_comments_and_extra_columns() {
        let text = "# ring-down\ntime_s,intensity,extra\n0,1,a\n1e-6, 0.5 ,b\n";
        let (t, y) = read_xy(text.as_bytes(), "time_s", "intensity").unwrap();
        assert_eq!(t, vec![0.0, 1e-6]);
        assert_eq!(y, vec![1.0, 0.5]);
    }

    #[test]
    fn line_numbers() {
        let text = "time_s,intensity\n0,1\n1,2\n2,oops\n";
        match read_xy(text.as_bytes(), "time_s", "intensity") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("intensity"));
            }
            other => panic!("{other:?}"),
        }
        match read_xy("t,y\n1,2\n".as_bytes(), "time_s", "intensity") {
            Err(Error::Parse { line: 1, message }) => assert!(message.contains("time_s")),
            other => panic!("{other:?}"),
        }
        assert!(read_xy("time_s,intensity\n0,1\n1\n".as_bytes(), "time_s", "intensity").is_err());
    }

    #[test]
    fn peaks_and_points() {
        let peaks = read_peaks("frequency_hz,membrane,m,n\n238e3,0,1,1\n".as_bytes()).unwrap();
        assert_eq!((peaks[0].m, peaks[0].n, peaks[0].quality_factor), (1, 1, None));
        assert!(read_peaks("frequency_hz,membrane,m,n\n238e3,0,1.5,1\n".as_bytes()).is_err());
        let pts = read_reflectivity("wavelength_m,reflectivity,sigma\n1064e-9,0.33,\n532e-9,0.2,0.01\n".as_bytes()).unwrap();
        assert_eq!(pts[0].sigma, None);
        assert_eq!(pts[1].sigma, Some(0.01));
    }

    #[test]
    fn number_format_roundtrips() {
        for v in [0.1, -2.5e-17, 1.0 / 3.0, 238830.0] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }
}
