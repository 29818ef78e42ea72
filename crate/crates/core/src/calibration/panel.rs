use std::io::{Read, Write};

use chrono::{Months, NaiveDate};

use crate::error::{Error, Result};

/// Dated levels for several instruments. Missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
    /// Row-major: `rows[date][instrument]`.
    pub rows: Vec<Vec<f64>>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != rows.len() {
            return Err(Error::Data(format!("{} dates but {} rows", dates.len(), rows.len())));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != labels.len()) {
            return Err(Error::Data(format!(
                "row for {} has {} cells, expected {}",
                dates[i],
                r.len(),
                labels.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("dates not strictly increasing at {}", w[1])));
        }
        Ok(PricePanel { dates, labels, rows })
    }

    pub fn n_series(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_label(&self, label: &str) -> Result<Vec<f64>> {
        let j = self
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Data(format!("no series labelled {label}")))?;
        Ok(self.column(j))
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(|v| v.is_nan())
    }

    /// Reads `date,label1,label2,...` with ISO dates; empty cells become NaN.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("date") || header.len() < 2 {
            return Err(Error::Data("panel header must be date,label1,...".into()));
        }
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| Error::Data(format!("line {line}: bad date {:?}: {e}", &rec[0])))?;
            let mut row = Vec::with_capacity(labels.len());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Data(format!("line {line}: column {}: bad number {cell:?}", labels[j]))
                    })?
                };
                row.push(v);
            }
            dates.push(date);
            rows.push(row);
        }
        PricePanel::new(dates, labels, rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (d, r) in self.dates.iter().zip(&self.rows) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(r.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per calendar day between the first and last date; gaps are filled
    /// by linear interpolation between the neighbouring observed values of each
    /// series (cells outside a series' observed range stay NaN).
    pub fn fill_calendar_days(&self) -> PricePanel {
        let (Some(&first), Some(&last)) = (self.dates.first(), self.dates.last()) else {
            return self.clone();
        };
        let days = (last - first).num_days() as usize + 1;
        let dates: Vec<NaiveDate> = (0..days).map(|k| first + chrono::Days::new(k as u64)).collect();
        let mut rows = vec![vec![f64::NAN; self.n_series()]; days];
        for j in 0..self.n_series() {
            let obs: Vec<(i64, f64)> = self
                .dates
                .iter()
                .zip(&self.rows)
                .filter(|(_, r)| !r[j].is_nan())
                .map(|(d, r)| ((*d - first).num_days(), r[j]))
                .collect();
            for w in obs.windows(2) {
                let ((d0, v0), (d1, v1)) = (w[0], w[1]);
                for d in d0..=d1 {
                    let f = (d - d0) as f64 / (d1 - d0) as f64;
                    rows[d as usize][j] = v0 + f * (v1 - v0);
                }
            }
            if let [(d, v)] = obs[..] {
                rows[d as usize][j] = v;
            }
        }
        PricePanel {
            dates,
            labels: self.labels.clone(),
            rows,
        }
    }
}

/// Maturity encoded in a label of the form `NAME@YYYY-MM-DD`.
pub fn maturity_from_label(label: &str) -> Result<NaiveDate> {
    let (_, date) = label
        .rsplit_once('@')
        .ok_or_else(|| Error::Data(format!("label {label:?} has no @YYYY-MM-DD maturity")))?;
    NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|e| Error::Data(format!("label {label:?}: bad maturity: {e}")))
}

/// Constant-maturity forward rates from a strip of futures quotes.
///
/// Quotes are converted to rates `(100 - P) / 100`, non-trading days are filled
/// by linear interpolation in time, and for every calendar day `d` the rate at
/// `d + h` months is interpolated linearly (in days) between the two contracts
/// whose maturities bracket it. Output labels are `CM{h}M`.
pub fn interpolate_constant_maturity(
    panel: &PricePanel,
    maturities: &[NaiveDate],
    horizons_months: &[u32],
) -> Result<PricePanel> {
    if maturities.len() != panel.n_series() {
        return Err(Error::Data(format!(
            "{} maturities for {} series",
            maturities.len(),
            panel.n_series()
        )));
    }
    if horizons_months.is_empty() {
        return Err(Error::Argument("need at least one target horizon".into()));
    }
    let mut order: Vec<usize> = (0..maturities.len()).collect();
    order.sort_by_key(|&j| maturities[j]);
    let filled = panel.fill_calendar_days();

    let mut rows = Vec::with_capacity(filled.dates.len());
    for (d, row) in filled.dates.iter().zip(&filled.rows) {
        let mut out = Vec::with_capacity(horizons_months.len());
        for &h in horizons_months {
            let target = d
                .checked_add_months(Months::new(h))
                .ok_or_else(|| Error::Data(format!("date overflow at {d} + {h} months")))?;
            let hi_pos = order.iter().position(|&j| maturities[j] >= target);
            let bracket = match hi_pos {
                Some(p) if maturities[order[p]] == target => (order[p], order[p]),
                Some(p) if p > 0 => (order[p - 1], order[p]),
                _ => {
                    return Err(Error::Data(format!(
                        "no contracts bracket maturity {target} ({h} months from {d})"
                    )))
                }
            };
            let (lo, hi) = bracket;
            let (r_lo, r_hi) = ((100.0 - row[lo]) / 100.0, (100.0 - row[hi]) / 100.0);
            if r_lo.is_nan() || r_hi.is_nan() {
                return Err(Error::Data(format!(
                    "missing quote on {d} for bracket {} / {} of maturity {target}",
                    panel.labels[lo], panel.labels[hi]
                )));
            }
            let rate = if lo == hi {
                r_lo
            } else {
                let span = (maturities[hi] - maturities[lo]).num_days() as f64;
                let f = (target - maturities[lo]).num_days() as f64 / span;
                r_lo + f * (r_hi - r_lo)
            };
            out.push(rate);
        }
        rows.push(out);
    }
    let labels = horizons_months.iter().map(|h| format!("CM{h}M")).collect();
    PricePanel::new(filled.dates, labels, rows)
}
