//! Futures panels and their CSV layout.
//!
//! One row per trading date:
//!
//! ```text
//! date,price_1,...,price_n,mat_1,...,mat_n
//! 2001-01-02,27.31,27.05,...,0.0833,0.1667,...
//! ```
//!
//! Dates are ISO-8601. An empty cell marks a missing quote; the price and
//! maturity of a contract must be missing together. Lines starting with `#`
//! are comments. Prices are levels by default and are log-transformed on
//! load.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Trading-day step: every consecutive pair of rows is one step.
pub const TRADING_DAY: f64 = 1.0 / 252.0;

/// Whether price cells hold levels or logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceScale {
    #[default]
    Level,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelFormat {
    pub prices: PriceScale,
    /// Step between rows, in years.
    pub dt: f64,
}

impl Default for PanelFormat {
    fn default() -> Self {
        Self {
            prices: PriceScale::Level,
            dt: TRADING_DAY,
        }
    }
}

/// Dated panel of log futures prices with per-observation maturities.
#[derive(Debug, Clone, PartialEq)]
pub struct FuturesPanel {
    dates: Vec<NaiveDate>,
    n_contracts: usize,
    log_prices: Vec<Option<f64>>,
    maturities: Vec<Option<f64>>,
    dt: f64,
}

impl FuturesPanel {
    /// Builds a panel from row-major cells, checking every invariant.
    pub fn new(
        dates: Vec<NaiveDate>,
        log_prices: Vec<Vec<Option<f64>>>,
        maturities: Vec<Vec<Option<f64>>>,
        dt: f64,
    ) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Argument(format!("dt must be finite and > 0, got {dt}")));
        }
        if log_prices.len() != dates.len() || maturities.len() != dates.len() {
            return Err(Error::Argument(format!(
                "{} dates but {} price rows and {} maturity rows",
                dates.len(),
                log_prices.len(),
                maturities.len()
            )));
        }
        let n_contracts = log_prices.first().map_or(0, Vec::len);
        let mut flat_prices = Vec::with_capacity(dates.len() * n_contracts);
        let mut flat_mats = Vec::with_capacity(dates.len() * n_contracts);
        for (t, (prices, mats)) in log_prices.into_iter().zip(maturities).enumerate() {
            if prices.len() != n_contracts || mats.len() != n_contracts {
                return Err(Error::Argument(format!(
                    "row {t} has {} prices and {} maturities, expected {n_contracts}",
                    prices.len(),
                    mats.len()
                )));
            }
            flat_prices.extend(prices);
            flat_mats.extend(mats);
        }
        let panel = Self {
            dates,
            n_contracts,
            log_prices: flat_prices,
            maturities: flat_mats,
            dt,
        };
        panel.check()?;
        Ok(panel)
    }

    /// Fully observed panel from dense rows.
    pub fn from_dense(
        dates: Vec<NaiveDate>,
        log_prices: &[Vec<f64>],
        maturities: &[Vec<f64>],
        dt: f64,
    ) -> Result<Self> {
        let wrap = |rows: &[Vec<f64>]| -> Vec<Vec<Option<f64>>> {
            rows.iter()
                .map(|r| r.iter().copied().map(Some).collect())
                .collect()
        };
        Self::new(dates, wrap(log_prices), wrap(maturities), dt)
    }

    fn check(&self) -> Result<()> {
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Argument(format!(
                    "dates must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for t in 0..self.n_dates() {
            let mut last: Option<f64> = None;
            for j in 0..self.n_contracts {
                let (p, m) = (self.log_price(t, j), self.maturity(t, j));
                if p.is_some() != m.is_some() {
                    return Err(Error::Argument(format!(
                        "row {t}, contract {}: price and maturity must be missing together",
                        j + 1
                    )));
                }
                if let Some(p) = p {
                    if !p.is_finite() {
                        return Err(Error::Argument(format!(
                            "row {t}, contract {}: log price is not finite",
                            j + 1
                        )));
                    }
                }
                if let Some(m) = m {
                    if !m.is_finite() || m < 0.0 {
                        return Err(Error::Argument(format!(
                            "row {t}, contract {}: maturity must be >= 0, got {m}",
                            j + 1
                        )));
                    }
                    if let Some(prev) = last {
                        if m <= prev {
                            return Err(Error::Argument(format!(
                                "row {t}, contract {}: maturities must increase across contracts",
                                j + 1
                            )));
                        }
                    }
                    last = Some(m);
                }
            }
        }
        Ok(())
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_contracts(&self) -> usize {
        self.n_contracts
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn log_price(&self, t: usize, contract: usize) -> Option<f64> {
        self.log_prices[t * self.n_contracts + contract]
    }

    pub fn maturity(&self, t: usize, contract: usize) -> Option<f64> {
        self.maturities[t * self.n_contracts + contract]
    }

    pub fn log_price_row(&self, t: usize) -> &[Option<f64>] {
        &self.log_prices[t * self.n_contracts..(t + 1) * self.n_contracts]
    }

    pub fn maturity_row(&self, t: usize) -> &[Option<f64>] {
        &self.maturities[t * self.n_contracts..(t + 1) * self.n_contracts]
    }

    /// `(contract index, maturity, log price)` of every quote observed at `t`.
    pub fn observed(&self, t: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.log_price_row(t)
            .iter()
            .zip(self.maturity_row(t))
            .enumerate()
            .filter_map(|(j, (p, m))| Some((j, (*m)?, (*p)?)))
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Sub-panel with only the listed contract columns. Column numbering is
    /// preserved in the sense that the first listed column becomes the front
    /// contract of the result.
    pub fn select_contracts(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_contracts) {
            return Err(Error::Argument(format!(
                "contract {} out of range (panel has {})",
                bad + 1,
                self.n_contracts
            )));
        }
        let pick = |cells: &dyn Fn(usize, usize) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
            (0..self.n_dates())
                .map(|t| columns.iter().map(|&j| cells(t, j)).collect())
                .collect()
        };
        let prices = pick(&|t, j| self.log_price(t, j));
        let mats = pick(&|t, j| self.maturity(t, j));
        Self::new(self.dates.clone(), prices, mats, self.dt)
    }

    /// Copy of the panel with some cells marked missing.
    pub fn with_missing(&self, cells: &[(usize, usize)]) -> Result<Self> {
        let mut out = self.clone();
        for &(t, j) in cells {
            if t >= self.n_dates() || j >= self.n_contracts {
                return Err(Error::Argument(format!("cell ({t}, {j}) out of range")));
            }
            out.log_prices[t * self.n_contracts + j] = None;
            out.maturities[t * self.n_contracts + j] = None;
        }
        Ok(out)
    }

    /// Copy of the panel with `f(t, contract, log price)` applied to every observed price.
    pub fn map_prices(&self, f: impl Fn(usize, usize, f64) -> f64) -> Result<Self> {
        let mut out = self.clone();
        for t in 0..self.n_dates() {
            for j in 0..self.n_contracts {
                let cell = &mut out.log_prices[t * self.n_contracts + j];
                if let Some(p) = cell {
                    *p = f(t, j, *p);
                }
            }
        }
        out.check()?;
        Ok(out)
    }

    /// First `n` rows.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.n_dates());
        Self {
            dates: self.dates[..n].to_vec(),
            n_contracts: self.n_contracts,
            log_prices: self.log_prices[..n * self.n_contracts].to_vec(),
            maturities: self.maturities[..n * self.n_contracts].to_vec(),
            dt: self.dt,
        }
    }
}

pub fn load_panel(path: impl AsRef<Path>, format: &PanelFormat) -> Result<FuturesPanel> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_panel(file, format)
}

/// Parses the CSV layout from any reader.
pub fn read_panel<R: Read>(reader: R, format: &PanelFormat) -> Result<FuturesPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n = parse_header(&headers)?;

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let mut mats = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != 2 * n + 1 {
            return Err(Error::Parse {
                row,
                column: "*".into(),
                reason: format!("expected {} fields, found {}", 2 * n + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            column: "date".into(),
            reason: format!("bad date `{}`: {e}", &record[0]),
        })?;
        if let Some(&prev) = dates.last() {
            if date <= prev {
                return Err(Error::Parse {
                    row,
                    column: "date".into(),
                    reason: format!("date {date} does not follow {prev}"),
                });
            }
        }
        let mut price_row = Vec::with_capacity(n);
        let mut mat_row = Vec::with_capacity(n);
        for j in 0..n {
            let price_col = &headers[1 + j];
            let mat_col = &headers[1 + n + j];
            let price = parse_cell(&record[1 + j], row, price_col)?;
            let maturity = parse_cell(&record[1 + n + j], row, mat_col)?;
            if price.is_some() != maturity.is_some() {
                return Err(Error::Parse {
                    row,
                    column: price_col.into(),
                    reason: format!("price and {mat_col} must be missing together"),
                });
            }
            if let Some(m) = maturity {
                if m < 0.0 {
                    return Err(Error::Parse {
                        row,
                        column: mat_col.into(),
                        reason: format!("negative maturity {m}"),
                    });
                }
            }
            let log_price = match (price, format.prices) {
                (Some(p), PriceScale::Level) if p <= 0.0 => {
                    return Err(Error::Parse {
                        row,
                        column: price_col.into(),
                        reason: format!("cannot take log of non-positive price {p}"),
                    });
                }
                (Some(p), PriceScale::Level) => Some(p.ln()),
                (None, _) => None,
                (p, PriceScale::Log) => p,
            };
            price_row.push(log_price);
            mat_row.push(maturity);
        }
        dates.push(date);
        prices.push(price_row);
        mats.push(mat_row);
    }
    if dates.is_empty() {
        return Ok(FuturesPanel {
            dates,
            n_contracts: n,
            log_prices: Vec::new(),
            maturities: Vec::new(),
            dt: format.dt,
        });
    }
    FuturesPanel::new(dates, prices, mats, format.dt).map_err(|e| match e {
        Error::Argument(reason) => Error::Parse {
            row: 0,
            column: "*".into(),
            reason,
        },
        other => other,
    })
}

fn parse_header(headers: &csv::StringRecord) -> Result<usize> {
    let bad = |column: &str, reason: String| Error::Parse {
        row: 0,
        column: column.into(),
        reason,
    };
    if headers.len() < 3 || headers.len().is_multiple_of(2) {
        return Err(bad("*", format!("header must be date,price_1..n,mat_1..n; got {} columns", headers.len())));
    }
    if &headers[0] != "date" {
        return Err(bad(&headers[0], "first column must be `date`".into()));
    }
    let n = (headers.len() - 1) / 2;
    for j in 0..n {
        let want_price = format!("price_{}", j + 1);
        let want_mat = format!("mat_{}", j + 1);
        if headers[1 + j] != want_price {
            return Err(bad(&headers[1 + j], format!("expected `{want_price}`")));
        }
        if headers[1 + n + j] != want_mat {
            return Err(bad(&headers[1 + n + j], format!("expected `{want_mat}`")));
        }
    }
    Ok(n)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        row,
        column: column.into(),
        reason: format!("not a number: `{cell}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.into(),
            reason: format!("not finite: `{cell}`"),
        });
    }
    Ok(Some(v))
}

/// Writes the panel with level prices.
pub fn save_panel(panel: &FuturesPanel, path: impl AsRef<Path>) -> Result<()> {
    save_panel_with(panel, path, PriceScale::Level, None)
}

/// Writes the panel, optionally preceded by a `#` comment line.
pub fn save_panel_with(
    panel: &FuturesPanel,
    path: impl AsRef<Path>,
    scale: PriceScale,
    comment: Option<&str>,
) -> Result<()> {
    let mut file = File::create(path)?;
    write_panel(&mut file, panel, scale, comment)?;
    file.flush()?;
    Ok(())
}

/// Numbers are written in shortest round-trip form so `read(write(p)) == p`.
pub fn write_panel<W: Write>(
    out: &mut W,
    panel: &FuturesPanel,
    scale: PriceScale,
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let n = panel.n_contracts();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend((1..=n).map(|j| format!("price_{j}")));
    header.extend((1..=n).map(|j| format!("mat_{j}")));
    wtr.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in 0..panel.n_dates() {
        let mut record = Vec::with_capacity(2 * n + 1);
        record.push(panel.dates[t].format("%Y-%m-%d").to_string());
        record.extend(panel.log_price_row(t).iter().map(|p| {
            fmt(p.map(|lp| match scale {
                PriceScale::Level => lp.exp(),
                PriceScale::Log => lp,
            }))
        }));
        record.extend(panel.maturity_row(t).iter().map(|m| fmt(*m)));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `n` consecutive weekdays starting at `start` (moved forward off a weekend).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}
