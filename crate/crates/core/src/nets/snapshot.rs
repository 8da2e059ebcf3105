use std::io::Write;

use nalgebra::DMatrix;

use crate::error::Result;

/// Writes `m` as CSV: a `rows,cols` header line, then one line per row.
pub fn write_snapshot<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "{},{}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 3.25e-9, 0.0, 7.0, 1.0 / 3.0]);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("2,3"));
        let vals: Vec<f64> = lines
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect();
        assert_eq!(DMatrix::from_row_slice(2, 3, &vals), m);
    }
}
