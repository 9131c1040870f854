//! Field serialization: row-major CSV (`index_0[,index_1],value`) and the
//! JSON envelope `{grid: {dim, counts}, values: [...]}`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ScalarField, TorusGrid};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn write_csv<T: Real, W: Write>(field: &ScalarField<T>, writer: W) -> Result<()> {
    let grid = field.grid();
    let mut w = csv::Writer::from_writer(writer);
    if grid.dim() == 1 {
        w.write_record(["index_0", "value"])?;
    } else {
        w.write_record(["index_0", "index_1", "value"])?;
    }
    for (flat, v) in field.values().iter().enumerate() {
        let idx = grid.unravel(flat);
        let value = format!("{v:e}");
        if grid.dim() == 1 {
            w.write_record([idx[0].to_string(), value])?;
        } else {
            w.write_record([idx[0].to_string(), idx[1].to_string(), value])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// [`write_csv`] into a newly created file.
pub fn write_csv_file<T: Real>(path: &std::path::Path, field: &ScalarField<T>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(field, file)
}

/// Reads a field CSV. Axis counts are inferred from the largest index.
pub fn read_csv<T: Real, R: Read>(reader: R) -> Result<ScalarField<T>> {
    let mut r = csv::Reader::from_reader(reader);
    let dim = match r.headers()?.len() {
        2 => 1,
        3 => 2,
        n => return Err(Error::InvalidInput(format!("field CSV has {n} columns"))),
    };
    let mut rows: Vec<([usize; 2], T)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_idx = |k: usize| -> Result<usize> {
            rec[k]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidInput(format!("bad index {:?}: {e}", &rec[k])))
        };
        let mut idx = [0, 0];
        for (k, slot) in idx.iter_mut().enumerate().take(dim) {
            *slot = parse_idx(k)?;
        }
        let v: f64 = rec[dim]
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad value {:?}: {e}", &rec[dim])))?;
        rows.push((idx, T::of(v)));
    }
    let counts: Vec<usize> = (0..dim)
        .map(|k| rows.iter().map(|(i, _)| i[k] + 1).max().unwrap_or(0))
        .collect();
    let grid = TorusGrid::new(&counts)?;
    if rows.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} rows, found {}",
            grid.len(),
            rows.len()
        )));
    }
    let mut values = vec![T::nan(); grid.len()];
    for (idx, v) in rows {
        values[grid.ravel(idx)] = v;
    }
    ScalarField::new(grid, values)
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    grid: TorusGrid,
    values: Vec<T>,
}

pub fn to_json<T: Real>(field: &ScalarField<T>) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        grid: *field.grid(),
        values: field.values().to_vec(),
    })?)
}

pub fn from_json<T: Real>(text: &str) -> Result<ScalarField<T>> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    ScalarField::new(env.grid, env.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;
    use proptest::prelude::*;

    #[test]
    fn csv_header_and_row_order() {
        let g = TorusGrid::new(&[8, 9]).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| x[0] + 10.0 * x[1]);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index_0,index_1,value"));
        assert!(lines.next().unwrap().starts_with("0,0,"));
        assert!(lines.next().unwrap().starts_with("0,1,"));
    }

    #[test]
    fn json_envelope_shape() {
        let g = TorusGrid::line(8).unwrap();
        let f = ScalarField::constant(g, 1.5f64);
        let s = to_json(&f).unwrap();
        assert!(s.starts_with(r#"{"grid":{"dim":1,"counts":[8]},"values":[1.5"#));
        assert_eq!(from_json::<f64>(&s).unwrap(), f);
    }

    proptest! {
        #[test]
        fn csv_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 80)) {
            let g = TorusGrid::new(&[10, 8]).unwrap();
            let f = ScalarField::new(g, vals).unwrap();
            let mut buf = Vec::new();
            write_csv(&f, &mut buf).unwrap();
            let back: ScalarField<f64> = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
