//! Dense storage for simulated trajectories.
//!
//! Layout is row-major `[path][date][coord]`: the states of path `n` at dates
//! `0..=t` form the contiguous slice `values[n*stride .. n*stride + (t+1)*dim]`
//! with `stride = (T+1)*dim`. Accrual factors are `[path][period]`, where period
//! `t` covers dates `t -> t+1`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    n_paths: usize,
    num_dates: usize,
    dim: usize,
    values: Vec<f64>,
    accrual: Vec<f64>,
}

impl PathBundle {
    /// `num_dates` is `T`; each path stores `T + 1` states.
    pub fn new(
        n_paths: usize,
        num_dates: usize,
        dim: usize,
        values: Vec<f64>,
        accrual: Vec<f64>,
    ) -> Result<Self> {
        if n_paths == 0 || dim == 0 {
            return Err(Error::Config("path bundle needs n_paths >= 1 and dim >= 1".into()));
        }
        if values.len() != n_paths * (num_dates + 1) * dim {
            return Err(Error::Config(format!(
                "values length {} does not match {n_paths} x {} x {dim}",
                values.len(),
                num_dates + 1
            )));
        }
        if accrual.len() != n_paths * num_dates {
            return Err(Error::Config(format!(
                "accrual length {} does not match {n_paths} x {num_dates}",
                accrual.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite path value {v}")));
        }
        if let Some(a) = accrual.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Numerical(format!("accrual factor {a} is not positive and finite")));
        }
        let bundle = PathBundle {
            n_paths,
            num_dates,
            dim,
            values,
            accrual,
        };
        let x0 = bundle.state(0, 0).to_vec();
        for n in 1..n_paths {
            if bundle.state(n, 0) != x0.as_slice() {
                return Err(Error::Config(format!("path {n} does not share the initial state")));
            }
        }
        Ok(bundle)
    }

    /// Bundle with constant per-period discount factor on every path.
    pub fn with_constant_accrual(
        n_paths: usize,
        num_dates: usize,
        dim: usize,
        values: Vec<f64>,
        factor: f64,
    ) -> Result<Self> {
        Self::new(n_paths, num_dates, dim, values, vec![factor; n_paths * num_dates])
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Number of exercise periods `T`.
    pub fn num_dates(&self) -> usize {
        self.num_dates
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn stride(&self) -> usize {
        (self.num_dates + 1) * self.dim
    }

    pub fn value(&self, path: usize, t: usize, coord: usize) -> f64 {
        self.values[path * self.stride() + t * self.dim + coord]
    }

    pub fn state(&self, path: usize, t: usize) -> &[f64] {
        let start = path * self.stride() + t * self.dim;
        &self.values[start..start + self.dim]
    }

    /// States at dates `0..=t`, flattened.
    pub fn prefix(&self, path: usize, t: usize) -> &[f64] {
        let start = path * self.stride();
        &self.values[start..start + (t + 1) * self.dim]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        self.prefix(path, self.num_dates)
    }

    /// Discount factor for period `t -> t+1` on `path`.
    pub fn accrual(&self, path: usize, t: usize) -> f64 {
        self.accrual[path * self.num_dates + t]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn accruals(&self) -> &[f64] {
        &self.accrual
    }

    /// Mutable access for tests and perturbation studies; the initial-state
    /// invariant is the caller's responsibility.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn write_csv<W: Write>(&self, values_out: W, accrual_out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(values_out);
        w.write_record(["path", "t", "coord", "value"])?;
        for n in 0..self.n_paths {
            for t in 0..=self.num_dates {
                for j in 0..self.dim {
                    w.write_record(&[
                        n.to_string(),
                        t.to_string(),
                        j.to_string(),
                        format!("{:e}", self.value(n, t, j)),
                    ])?;
                }
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(accrual_out);
        w.write_record(["path", "t", "factor"])?;
        for n in 0..self.n_paths {
            for t in 0..self.num_dates {
                w.write_record(&[n.to_string(), t.to_string(), format!("{:e}", self.accrual(n, t))])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`PathBundle::write_csv`]. Rows may come in any
    /// order; every `(path, t, coord)` cell must be present exactly once.
    pub fn read_csv<R: Read>(values_in: R, accrual_in: R) -> Result<Self> {
        let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut r = csv::Reader::from_reader(values_in);
        check_header(r.headers()?, &["path", "t", "coord", "value"])?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            cells.push((
                parse_field(&rec, 0, line)?,
                parse_field(&rec, 1, line)?,
                parse_field(&rec, 2, line)?,
                parse_field(&rec, 3, line)?,
            ));
        }
        let n_paths = cells.iter().map(|c| c.0).max().map_or(0, |m| m + 1);
        let num_dates = cells.iter().map(|c| c.1).max().unwrap_or(0);
        let dim = cells.iter().map(|c| c.2).max().map_or(0, |m| m + 1);
        let stride = (num_dates + 1) * dim;
        let mut values = vec![f64::NAN; n_paths * stride];
        for (n, t, j, v) in cells {
            let slot = &mut values[n * stride + t * dim + j];
            if !slot.is_nan() {
                return Err(Error::Data(format!("duplicate cell path={n} t={t} coord={j}")));
            }
            *slot = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Data("path CSV is missing cells".into()));
        }
        let mut accrual = vec![f64::NAN; n_paths * num_dates];
        let mut r = csv::Reader::from_reader(accrual_in);
        check_header(r.headers()?, &["path", "t", "factor"])?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let n: usize = parse_field(&rec, 0, line)?;
            let t: usize = parse_field(&rec, 1, line)?;
            if n >= n_paths || t >= num_dates {
                return Err(Error::Data(format!("line {line}: accrual cell ({n}, {t}) out of range")));
            }
            accrual[n * num_dates + t] = parse_field(&rec, 2, line)?;
        }
        if accrual.iter().any(|v| v.is_nan()) {
            return Err(Error::Data("accrual CSV is missing cells".into()));
        }
        Self::new(n_paths, num_dates, dim, values, accrual)
    }
}

fn check_header(h: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = h.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Data(format!("line 1: expected header {expected:?}, got {got:?}")));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::Data(format!("line {line}: missing column {idx}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Data(format!("line {line}: cannot parse '{raw}'")))
}
