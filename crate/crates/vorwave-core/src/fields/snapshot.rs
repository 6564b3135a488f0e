//! CSV snapshots of [`TorusField`]s: one row per coefficient with columns
//! `ell_1, …, ell_nu, j, re, im`. Every coefficient of the box is written, so
//! the cutoffs are recovered from the largest indices on reading.

use super::{FieldError, TorusField};
use num_complex::Complex64 as C64;
use std::io::{Read, Write};

pub fn write_torus_csv<W: Write>(u: &TorusField, out: W) -> Result<(), FieldError> {
    let nu = u.nu();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=nu).map(|d| format!("ell_{d}")).collect();
    header.extend(["j", "re", "im"].map(String::from));
    w.write_record(&header)?;
    for (ell, j, c) in u.modes() {
        let mut rec: Vec<String> = ell.iter().map(|v| v.to_string()).collect();
        rec.push(j.to_string());
        // `{:e}` round-trips f64 exactly.
        rec.push(format!("{:e}", c.re));
        rec.push(format!("{:e}", c.im));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_torus_csv<R: Read>(input: R) -> Result<TorusField, FieldError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 4 {
        return Err(FieldError::Parse(format!("expected at least 4 columns, found {cols}")));
    }
    let nu = cols - 3;
    for (d, name) in header.iter().take(nu).enumerate() {
        if name.trim() != format!("ell_{}", d + 1) {
            return Err(FieldError::Parse(format!("unexpected column '{name}'")));
        }
    }
    if header.iter().skip(nu).map(str::trim).ne(["j", "re", "im"]) {
        return Err(FieldError::Parse("trailing columns must be j, re, im".into()));
    }
    let mut rows = Vec::new();
    let mut n_phi = 0usize;
    let mut n_modes = 0usize;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| FieldError::Parse(format!("row {}: bad {what}", line + 2));
        let mut ell = Vec::with_capacity(nu);
        for d in 0..nu {
            ell.push(rec[d].trim().parse::<i64>().map_err(|_| bad("ell"))?);
        }
        let j: i64 = rec[nu].trim().parse().map_err(|_| bad("j"))?;
        let re: f64 = rec[nu + 1].trim().parse().map_err(|_| bad("re"))?;
        let im: f64 = rec[nu + 2].trim().parse().map_err(|_| bad("im"))?;
        for &l in &ell {
            n_phi = n_phi.max(l.unsigned_abs() as usize);
        }
        n_modes = n_modes.max(j.unsigned_abs() as usize);
        rows.push((ell, j, C64::new(re, im)));
    }
    let mut u = TorusField::zeros(nu, n_phi, n_modes);
    let mut seen = 0usize;
    for (ell, j, c) in rows {
        let key: Vec<i64> = ell.iter().copied().chain([j]).collect();
        let idx = u.spec.shape.index(&key).expect("indices bounded by construction");
        u.spec.data[idx] = c;
        seen += 1;
    }
    if seen != u.spec.data.len() {
        return Err(FieldError::Parse(format!(
            "incomplete coefficient box: {seen} rows for {} coefficients",
            u.spec.data.len()
        )));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Spectral;

    #[test]
    fn snapshot_round_trip_is_exact() {
        let u = TorusField::from_fn(2, 2, 5, |p, x| {
            (p[0] - x).cos() * 0.3 + (p[1] + 2.0 * x).sin() / 7.0 + 1e-17
        });
        let mut buf = Vec::new();
        write_torus_csv(&u, &mut buf).unwrap();
        let v = read_torus_csv(buf.as_slice()).unwrap();
        assert_eq!(v.nu(), 2);
        assert_eq!(v.n_phi(), 2);
        assert_eq!(v.n_modes(), 5);
        assert_eq!(u.minus(&v).max_coeff(), 0.0);
    }

    #[test]
    fn rejects_bad_header() {
        let text = "a,j,re,im\n0,0,1,0\n";
        assert!(read_torus_csv(text.as_bytes()).is_err());
    }
}
