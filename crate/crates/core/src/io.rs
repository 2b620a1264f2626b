//! CSV input and output. Floats are written with 17 significant digits so
//! that every value reads back exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{NuggetError, Result};
use crate::matrix::DataMatrix;
use crate::nugget::{DataNugget, NuggetSet};
use crate::scalar::Scalar;
use crate::wstats::DensityGrid;

/// Formats a value with 17 significant digits.
pub fn fmt_float<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

fn parse_cell<T: Scalar>(s: &str) -> Option<T> {
    s.trim().parse::<f64>().ok().map(T::lit)
}

/// Reads a numeric CSV. The first record is taken as a header when any of
/// its cells fails to parse as a number.
pub fn read_matrix_from<T: Scalar, R: Read>(reader: R) -> Result<DataMatrix<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let parsed: Option<Vec<T>> = rec.iter().map(parse_cell).collect();
        let Some(row) = parsed else {
            if line == 0 {
                continue;
            }
            let bad = rec.iter().find(|c| parse_cell::<T>(c).is_none()).unwrap_or_default();
            return Err(NuggetError::Parse { line: line + 1, message: format!("'{bad}' is not a number") });
        };
        match ncols {
            None => ncols = Some(row.len()),
            Some(p) if p != row.len() => {
                return Err(NuggetError::Parse { line: line + 1, message: format!("expected {p} fields, found {}", row.len()) })
            }
            _ => {}
        }
        values.extend(row);
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| NuggetError::Empty("no data rows".into()))?;
    DataMatrix::new(nrows, ncols, values)
}

pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<DataMatrix<T>> {
    read_matrix_from(std::fs::File::open(path)?)
}

pub fn write_matrix_to<T: Scalar, W: Write>(x: &DataMatrix<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=x.ncols()).map(|c| format!("x{c}")))?;
    for row in x.rows() {
        w.write_record(row.iter().map(|&v| fmt_float(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix<T: Scalar>(x: &DataMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_to(x, std::fs::File::create(path)?)
}

/// Columns `nugget_id, center_1..center_P, weight, scale`.
pub fn write_nuggets_to<T: Scalar, W: Write>(nuggets: &[DataNugget<T>], writer: W) -> Result<()> {
    let p = nuggets.first().map_or(0, DataNugget::dim);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["nugget_id".to_string()];
    header.extend((1..=p).map(|c| format!("center_{c}")));
    header.extend(["weight".to_string(), "scale".to_string()]);
    w.write_record(&header)?;
    for (j, n) in nuggets.iter().enumerate() {
        let mut rec = vec![j.to_string()];
        rec.extend(n.center.iter().map(|&v| fmt_float(v)));
        rec.push(n.weight.to_string());
        rec.push(fmt_float(n.scale));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_nuggets<T: Scalar>(nuggets: &[DataNugget<T>], path: impl AsRef<Path>) -> Result<()> {
    write_nuggets_to(nuggets, std::fs::File::create(path)?)
}

/// Reads a nugget CSV written by [`write_nuggets`]. Rows must be in
/// `nugget_id` order.
pub fn read_nuggets_from<T: Scalar, R: Read>(reader: R) -> Result<Vec<DataNugget<T>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 4 || header.get(0).map(str::trim) != Some("nugget_id") {
        return Err(NuggetError::Parse { line: 1, message: "expected header nugget_id,center_1..,weight,scale".into() });
    }
    let p = header.len() - 3;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let err = |m: String| NuggetError::Parse { line, message: m };
        if rec.len() != p + 3 {
            return Err(err(format!("expected {} fields, found {}", p + 3, rec.len())));
        }
        let id: usize = rec[0].trim().parse().map_err(|_| err(format!("bad nugget id '{}'", &rec[0])))?;
        if id != out.len() {
            return Err(err(format!("nugget id {id} out of order")));
        }
        let center: Option<Vec<T>> = (1..=p).map(|c| parse_cell(&rec[c])).collect();
        let center = center.ok_or_else(|| err("bad center value".into()))?;
        let weight: u64 = rec[p + 1].trim().parse().map_err(|_| err(format!("bad weight '{}'", &rec[p + 1])))?;
        let scale: T = parse_cell(&rec[p + 2]).ok_or_else(|| err("bad scale".into()))?;
        out.push(DataNugget::new(center, weight, scale).map_err(|e| err(e.to_string()))?);
    }
    if out.is_empty() {
        return Err(NuggetError::Empty("no nuggets".into()));
    }
    Ok(out)
}

pub fn read_nuggets<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<DataNugget<T>>> {
    read_nuggets_from(std::fs::File::open(path)?)
}

fn write_index_pairs<W: Write>(names: [&str; 2], values: &[usize], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(names)?;
    for (i, &v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_index_pairs<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| NuggetError::Parse { line, message: format!("bad index '{s}'") });
        if rec.len() != 2 {
            return Err(NuggetError::Parse { line, message: "expected two fields".into() });
        }
        if parse(&rec[0])? != out.len() {
            return Err(NuggetError::Parse { line, message: "rows out of order".into() });
        }
        out.push(parse(&rec[1])?);
    }
    Ok(out)
}

/// Columns `row_index, nugget_id`.
pub fn write_assignment<W: Write>(assignment: &[usize], writer: W) -> Result<()> {
    write_index_pairs(["row_index", "nugget_id"], assignment, writer)
}

pub fn read_assignment<R: Read>(reader: R) -> Result<Vec<usize>> {
    read_index_pairs(reader)
}

/// Columns `nugget_id, cluster_id`.
pub fn write_clusters<W: Write>(assignment: &[usize], writer: W) -> Result<()> {
    write_index_pairs(["nugget_id", "cluster_id"], assignment, writer)
}

pub fn read_clusters<R: Read>(reader: R) -> Result<Vec<usize>> {
    read_index_pairs(reader)
}

/// Columns `row_index, label`.
pub fn write_labels<W: Write>(labels: &[usize], writer: W) -> Result<()> {
    write_index_pairs(["row_index", "label"], labels, writer)
}

/// One value per line with header `weight`.
pub fn read_weights<T: Scalar, R: Read>(reader: R) -> Result<Vec<T>> {
    Ok(read_matrix_from::<T, R>(reader)?.into_values())
}

/// Long format: `ix, iy, x_lo, x_hi, y_lo, y_hi, value`.
pub fn write_grid<T: Scalar, W: Write>(grid: &DensityGrid<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ix", "iy", "x_lo", "x_hi", "y_lo", "y_hi", "value"])?;
    let nb = T::from_count(grid.bins);
    let dx = (grid.x_range.1 - grid.x_range.0) / nb;
    let dy = (grid.y_range.1 - grid.y_range.0) / nb;
    for ix in 0..grid.bins {
        for iy in 0..grid.bins {
            let x0 = grid.x_range.0 + dx * T::from_count(ix);
            let y0 = grid.y_range.0 + dy * T::from_count(iy);
            w.write_record([
                ix.to_string(),
                iy.to_string(),
                fmt_float(x0),
                fmt_float(x0 + dx),
                fmt_float(y0),
                fmt_float(y0 + dy),
                fmt_float(grid.get(ix, iy)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a nugget set from its CSV parts, checking that the assignment
/// agrees with the weights.
pub fn nugget_set_from_parts<T: Scalar>(nuggets: Vec<DataNugget<T>>, assignment: Vec<usize>) -> Result<NuggetSet<T>> {
    let mut counts = vec![0u64; nuggets.len()];
    for &j in &assignment {
        *counts.get_mut(j).ok_or_else(|| NuggetError::param(format!("assignment refers to missing nugget {j}")))? += 1;
    }
    if let Some(j) = (0..nuggets.len()).find(|&j| counts[j] != nuggets[j].weight) {
        return Err(NuggetError::param(format!("nugget {j} has weight {} but {} assigned rows", nuggets[j].weight, counts[j])));
    }
    Ok(NuggetSet {
        nuggets,
        assignment,
        center_mode: crate::nugget::CenterMode::Mean,
        params: None,
        stats: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let with = "a,b\n1,2\n3,4.5\n";
        let x: DataMatrix<f64> = read_matrix_from(with.as_bytes()).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (2, 2));
        assert_eq!(x.get(1, 1), 4.5);
        let without = "1,2\n3,4\n";
        assert_eq!(read_matrix_from::<f64, _>(without.as_bytes()).unwrap().nrows(), 2);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(matches!(read_matrix_from::<f64, _>("1,2\n3,x\n".as_bytes()), Err(NuggetError::Parse { line: 2, .. })));
        assert!(read_matrix_from::<f64, _>("1,2\n3\n".as_bytes()).is_err());
        assert!(read_matrix_from::<f64, _>("1,NaN\n".as_bytes()).is_err());
        assert!(read_matrix_from::<f64, _>("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn floats_round_trip() {
        let v = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE];
        for x in v {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
        let m = DataMatrix::new(1, 5, v.to_vec()).unwrap();
        let mut buf = Vec::new();
        write_matrix_to(&m, &mut buf).unwrap();
        assert_eq!(read_matrix_from::<f64, _>(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn nuggets_round_trip() {
        let n = vec![DataNugget::new(vec![1.0, 2.0], 3, 0.25).unwrap(), DataNugget::new(vec![-1.0, 0.5], 1, 0.0).unwrap()];
        let mut buf = Vec::new();
        write_nuggets_to(&n, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("nugget_id,center_1,center_2,weight,scale\n"));
        assert_eq!(read_nuggets_from::<f64, _>(buf.as_slice()).unwrap(), n);
        let mut a = Vec::new();
        write_assignment(&[0, 1, 0, 0], &mut a).unwrap();
        let back = read_assignment(a.as_slice()).unwrap();
        assert_eq!(back, vec![0, 1, 0, 0]);
        assert!(nugget_set_from_parts(n.clone(), back).is_ok());
        assert!(nugget_set_from_parts(n, vec![0, 1]).is_err());
    }
}
