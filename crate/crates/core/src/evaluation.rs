//! Forecast-error reporting: per-contract RMSE for filtered vs smoothed
//! states, cross-sectional curves, and term-structure shape.
//!
//! Out-of-sample contracts are priced from states that were estimated on
//! the in-sample contracts only, so the split is across maturities, not
//! across time.

use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::data::FuturesPanel;
use crate::error::{Error, Result};
use crate::kalman::{run_filter, run_smoother, FilterOutput, SmootherOutput};
use crate::model::{compute_a, ModelParams, StateDistribution};

/// Noise-free log prices `d + F' mean` at the given maturities.
pub fn fitted_log_prices(mean: &Vector2<f64>, theta: &ModelParams, maturities: &[f64]) -> Result<Vec<f64>> {
    maturities
        .iter()
        .map(|&t| {
            let a = compute_a(theta, t)?;
            Ok(a + (-theta.kappa * t).exp() * mean[0] + (-theta.gamma * t).exp() * mean[1])
        })
        .collect()
}

/// Contract columns (0-based) used to estimate states and those priced out of sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub in_sample: Vec<usize>,
    pub out_of_sample: Vec<usize>,
}

impl Split {
    /// Contracts 1-13 in sample, 14-20 out of sample (clipped to the panel width).
    pub fn table_default(n_contracts: usize) -> Self {
        Self {
            in_sample: (0..13.min(n_contracts)).collect(),
            out_of_sample: (13..20.min(n_contracts)).collect(),
        }
    }

    pub fn validate(&self, n_contracts: usize) -> Result<()> {
        if self.in_sample.is_empty() {
            return Err(Error::Argument("split needs at least one in-sample contract".into()));
        }
        let mut all: Vec<usize> = self.in_sample.iter().chain(&self.out_of_sample).copied().collect();
        if let Some(&bad) = all.iter().find(|&&c| c >= n_contracts) {
            return Err(Error::Argument(format!(
                "contract {} not in a panel of {n_contracts}",
                bad + 1
            )));
        }
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("split ranges overlap".into()));
        }
        if self.in_sample.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("in-sample contracts must be increasing".into()));
        }
        Ok(())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    /// Parses `in=1..13,out=14..20` (1-based, inclusive; `out=` may be omitted).
    fn from_str(s: &str) -> Result<Self> {
        let mut split = Split {
            in_sample: Vec::new(),
            out_of_sample: Vec::new(),
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, range) = part
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("bad split part `{part}`")))?;
            let (lo, hi) = match range.split_once("..") {
                Some((lo, hi)) => (lo, hi),
                None => (range, range),
            };
            let parse = |v: &str| -> Result<usize> {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::Argument(format!("bad contract number `{v}`")))
            };
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if hi < lo {
                return Err(Error::Argument(format!("empty range `{range}`")));
            }
            let cols = (lo - 1..hi).collect();
            match key.trim() {
                "in" => split.in_sample = cols,
                "out" => split.out_of_sample = cols,
                other => return Err(Error::Argument(format!("unknown split key `{other}`"))),
            }
        }
        Ok(split)
    }
}

/// Fitted log prices for every cell of the panel from a sequence of states.
/// Cells without a maturity are `None`.
pub fn fitted_panel(
    panel: &FuturesPanel,
    theta: &ModelParams,
    states: &[StateDistribution],
) -> Result<Vec<Vec<Option<f64>>>> {
    if states.len() != panel.n_dates() {
        return Err(Error::Argument(format!(
            "{} states for {} dates",
            states.len(),
            panel.n_dates()
        )));
    }
    (0..panel.n_dates())
        .map(|t| {
            panel
                .maturity_row(t)
                .iter()
                .map(|m| match m {
                    Some(m) => Ok(Some(fitted_log_prices(&states[t].mean, theta, &[*m])?[0])),
                    None => Ok(None),
                })
                .collect()
        })
        .collect()
}

/// Filter and smoother runs on the in-sample columns, with fitted values for all columns.
#[derive(Debug, Clone)]
pub struct SplitFit {
    pub filter: FilterOutput,
    pub smoother: SmootherOutput,
    pub filter_fitted: Vec<Vec<Option<f64>>>,
    pub smoother_fitted: Vec<Vec<Option<f64>>>,
}

pub fn split_fit(
    panel: &FuturesPanel,
    theta: &ModelParams,
    split: &Split,
    init: &StateDistribution,
) -> Result<SplitFit> {
    split.validate(panel.n_contracts())?;
    let in_panel = panel.select_contracts(&split.in_sample)?;
    let filter = run_filter(&in_panel, theta, init)?;
    let smoother = run_smoother(&filter)?;
    let filter_fitted = fitted_panel(panel, theta, &filter.filtered)?;
    let smoother_fitted = fitted_panel(panel, theta, &smoother.smoothed)?;
    Ok(SplitFit {
        filter,
        smoother,
        filter_fitted,
        smoother_fitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLabel {
    InSample,
    OutOfSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRmse {
    /// 1-based contract number.
    pub contract: usize,
    pub label: SampleLabel,
    /// `None` when the contract has no observations.
    pub filter: Option<f64>,
    pub smoother: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub period_start: Option<NaiveDate>,
    pub period_end: Option<NaiveDate>,
    pub rows: Vec<ContractRmse>,
}

/// RMSE of `fitted` against the panel for one contract, skipping missing cells.
fn column_rmse(panel: &FuturesPanel, fitted: &[Vec<Option<f64>>], contract: usize) -> Option<f64> {
    let (sum, count) = (0..panel.n_dates())
        .filter_map(|t| Some(panel.log_price(t, contract)? - fitted[t][contract]?))
        .fold((0.0, 0usize), |(s, c), e| (s + e * e, c + 1));
    (count > 0).then(|| (sum / count as f64).sqrt())
}

/// Per-contract RMSE for the filtered and smoothed fits of `split_fit`.
pub fn rmse_report(panel: &FuturesPanel, fit: &SplitFit, split: &Split) -> Result<RmseReport> {
    split.validate(panel.n_contracts())?;
    if fit.filter_fitted.len() != panel.n_dates() || fit.smoother_fitted.len() != panel.n_dates() {
        return Err(Error::Argument("fitted values do not match the panel".into()));
    }
    let labelled = split
        .in_sample
        .iter()
        .map(|&c| (c, SampleLabel::InSample))
        .chain(split.out_of_sample.iter().map(|&c| (c, SampleLabel::OutOfSample)));
    let rows = labelled
        .map(|(c, label)| ContractRmse {
            contract: c + 1,
            label,
            filter: column_rmse(panel, &fit.filter_fitted, c),
            smoother: column_rmse(panel, &fit.smoother_fitted, c),
        })
        .collect();
    Ok(RmseReport {
        period_start: panel.dates().first().copied(),
        period_end: panel.dates().last().copied(),
        rows,
    })
}

/// Runs the split fit and reports RMSE in one call.
pub fn evaluate_split(
    panel: &FuturesPanel,
    theta: &ModelParams,
    split: &Split,
    init: &StateDistribution,
) -> Result<(RmseReport, SplitFit)> {
    let fit = split_fit(panel, theta, split, init)?;
    let report = rmse_report(panel, &fit, split)?;
    Ok((report, fit))
}

fn sig10(v: f64) -> String {
    format!("{v:.9e}")
}

fn opt_sig10(v: Option<f64>) -> String {
    v.map(sig10).unwrap_or_default()
}

impl RmseReport {
    /// Mean RMSE over contracts with a given label.
    pub fn mean(&self, label: SampleLabel, smoother: bool) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.label == label)
            .filter_map(|r| if smoother { r.smoother } else { r.filter })
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("contract,sample,filter_rmse,smoother_rmse\n");
        for r in &self.rows {
            let label = match r.label {
                SampleLabel::InSample => "in",
                SampleLabel::OutOfSample => "out",
            };
            let _ = writeln!(
                s,
                "C{},{label},{},{}",
                r.contract,
                opt_sig10(r.filter),
                opt_sig10(r.smoother)
            );
        }
        s
    }

    /// Aligned text table with in-sample rows first.
    pub fn to_table(&self) -> String {
        let period = match (self.period_start, self.period_end) {
            (Some(a), Some(b)) => format!("{a} .. {b}"),
            _ => "empty".into(),
        };
        let mut s = String::new();
        let _ = writeln!(s, "Period: {period}");
        let _ = writeln!(s, "{:<14} {:>8} {:>16} {:>16}", "", "Contract", "Filter", "Smoother");
        let mut last = None;
        for r in &self.rows {
            let group = match r.label {
                SampleLabel::InSample => "In-Sample",
                SampleLabel::OutOfSample => "Out-of-Sample",
            };
            let shown = if last == Some(r.label) { "" } else { group };
            last = Some(r.label);
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>16} {:>16}",
                shown,
                format!("C{}", r.contract),
                r.filter.map(sig10).unwrap_or_else(|| "-".into()),
                r.smoother.map(sig10).unwrap_or_else(|| "-".into())
            );
        }
        s
    }
}

/// Observed and fitted curves on one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub date: NaiveDate,
    /// 1-based contract numbers of the observed quotes.
    pub contracts: Vec<usize>,
    pub observed: Vec<f64>,
    pub filter_fit: Vec<f64>,
    pub smoother_fit: Vec<f64>,
    /// Sum of squared filter errors.
    pub s_f: f64,
    /// Sum of squared smoother errors.
    pub s_s: f64,
}

fn sum_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cross_section(
    panel: &FuturesPanel,
    theta: &ModelParams,
    filt: &[StateDistribution],
    smth: &[StateDistribution],
    date: NaiveDate,
) -> Result<CrossSection> {
    let t = panel
        .index_of(date)
        .ok_or_else(|| Error::Argument(format!("date {date} not in panel")))?;
    if filt.len() != panel.n_dates() || smth.len() != panel.n_dates() {
        return Err(Error::Argument("state sequences do not match the panel".into()));
    }
    let quotes: Vec<(usize, f64, f64)> = panel.observed(t).collect();
    let maturities: Vec<f64> = quotes.iter().map(|q| q.1).collect();
    let observed: Vec<f64> = quotes.iter().map(|q| q.2).collect();
    let filter_fit = fitted_log_prices(&filt[t].mean, theta, &maturities)?;
    let smoother_fit = fitted_log_prices(&smth[t].mean, theta, &maturities)?;
    Ok(CrossSection {
        date,
        contracts: quotes.iter().map(|q| q.0 + 1).collect(),
        s_f: sum_sq(&observed, &filter_fit),
        s_s: sum_sq(&observed, &smoother_fit),
        observed,
        filter_fit,
        smoother_fit,
    })
}

impl CrossSection {
    /// `contract,observed,filter_fit,smoother_fit`, full precision so the
    /// sums of squares recompute exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("contract,observed,filter_fit,smoother_fit\n");
        for i in 0..self.observed.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.contracts[i], self.observed[i], self.filter_fit[i], self.smoother_fit[i]
            );
        }
        s
    }

    pub fn shape(&self) -> TermStructure {
        classify_term_structure(&self.observed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermStructure {
    /// Prices fall with maturity.
    Backwardation,
    /// Prices rise with maturity.
    Contango,
    Mixed,
}

impl std::fmt::Display for TermStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TermStructure::Backwardation => "backwardation",
            TermStructure::Contango => "contango",
            TermStructure::Mixed => "mixed",
        })
    }
}

pub fn classify_term_structure(observed: &[f64]) -> TermStructure {
    let steps = || observed.windows(2).map(|w| w[1] - w[0]);
    let non_increasing = steps().all(|d| d <= 0.0);
    let non_decreasing = steps().all(|d| d >= 0.0);
    if non_increasing && steps().any(|d| d < 0.0) {
        TermStructure::Backwardation
    } else if non_decreasing && steps().any(|d| d > 0.0) {
        TermStructure::Contango
    } else {
        TermStructure::Mixed
    }
}
