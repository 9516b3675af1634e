//! Next-day returns regressed on sentiment scores with firm and date fixed
//! effects, two-way clustered inference and fit statistics.
//!
//! The fixed effects are absorbed by alternating demeaning (firm means, then
//! date means, repeated until the largest per-sweep change falls under the
//! tolerance). Slopes come from OLS on the demeaned data, which by
//! Frisch-Waugh-Lovell equals the slope block of the dummy-variable
//! regression. Fixed effects are recovered afterwards and normalized so that
//! firm effects and date effects each sum to zero around a global intercept.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::marketdata::{LabeledExample, MarketData};
use crate::scoring::ScoreTable;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub firm_id: usize,
    pub date_id: usize,
    /// Percent.
    pub next_day_return: f64,
    pub regressors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub firm_labels: Vec<String>,
    pub date_labels: Vec<String>,
    pub regressor_names: Vec<String>,
    pub observations: Vec<PanelObservation>,
}

impl Panel {
    pub fn new(
        firm_labels: Vec<String>,
        date_labels: Vec<String>,
        regressor_names: Vec<String>,
        observations: Vec<PanelObservation>,
    ) -> Result<Self> {
        let p = regressor_names.len();
        let mut cells = BTreeSet::new();
        for o in &observations {
            if o.regressors.len() != p {
                return Err(Error::InvalidInput(format!(
                    "observation has {} regressors, panel declares {p}",
                    o.regressors.len()
                )));
            }
            if o.firm_id >= firm_labels.len() || o.date_id >= date_labels.len() {
                return Err(Error::InvalidInput("firm or date id out of range".into()));
            }
            if !cells.insert((o.firm_id, o.date_id)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate panel cell ({}, {})",
                    firm_labels[o.firm_id], date_labels[o.date_id]
                )));
            }
            if !o.next_day_return.is_finite() || o.regressors.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite panel value".into()));
            }
        }
        Ok(Panel {
            firm_labels,
            date_labels,
            regressor_names,
            observations,
        })
    }

    /// Builds a panel with generated labels `f{i}` / `d{n}` / `x{j}`.
    pub fn from_observations(observations: Vec<PanelObservation>, n_regressors: usize) -> Result<Self> {
        let nf = observations.iter().map(|o| o.firm_id + 1).max().unwrap_or(0);
        let nd = observations.iter().map(|o| o.date_id + 1).max().unwrap_or(0);
        Panel::new(
            (0..nf).map(|i| format!("f{i}")).collect(),
            (0..nd).map(|i| format!("d{i}")).collect(),
            (0..n_regressors).map(|j| format!("x{j}")).collect(),
            observations,
        )
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_regressors(&self) -> usize {
        self.regressor_names.len()
    }

    pub fn firms_present(&self) -> usize {
        self.observations.iter().map(|o| o.firm_id).collect::<BTreeSet<_>>().len()
    }

    pub fn dates_present(&self) -> usize {
        self.observations.iter().map(|o| o.date_id).collect::<BTreeSet<_>>().len()
    }

    pub fn response(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.next_day_return).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.observations.iter().map(|o| o.regressors[j]).collect()
    }

    /// Keeps only the listed regressor columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Panel> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_regressors()) {
            return Err(Error::InvalidInput(format!("no regressor column {bad}")));
        }
        Ok(Panel {
            firm_labels: self.firm_labels.clone(),
            date_labels: self.date_labels.clone(),
            regressor_names: columns.iter().map(|&c| self.regressor_names[c].clone()).collect(),
            observations: self
                .observations
                .iter()
                .map(|o| PanelObservation {
                    regressors: columns.iter().map(|&c| o.regressors[c]).collect(),
                    ..o.clone()
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PanelAssembly {
    pub panel: Panel,
    pub dropped_no_next_day: usize,
    pub dropped_missing_score: usize,
}

/// Pairs (firm, event day) scores with the firm's return on the following
/// trading day, in percent. Same-day articles are averaged per model.
pub fn assemble_panel(
    examples: &[LabeledExample],
    scores: &ScoreTable,
    data: &MarketData,
    models: &[String],
) -> Result<PanelAssembly> {
    let mut dropped_missing_score = 0;
    let mut cells: BTreeMap<(String, chrono::NaiveDate), (Vec<f64>, usize)> = BTreeMap::new();
    for ex in examples {
        let row: Option<Vec<f64>> = models
            .iter()
            .map(|m| scores.get(&ex.article_id, m))
            .collect();
        let Some(row) = row else {
            dropped_missing_score += 1;
            continue;
        };
        let cell = cells
            .entry((ex.ticker.clone(), ex.event_date))
            .or_insert_with(|| (vec![0.0; models.len()], 0));
        for (acc, s) in cell.0.iter_mut().zip(row) {
            *acc += s;
        }
        cell.1 += 1;
    }

    let mut dropped_no_next_day = 0;
    let mut rows = Vec::new();
    for ((ticker, date), (sums, count)) in cells {
        let next = data
            .calendar()
            .next(date)
            .and_then(|n| data.bar(&ticker, n));
        match next {
            Some(bar) => {
                let regressors = sums.iter().map(|s| s / count as f64).collect();
                rows.push((ticker, date, bar.total_return * 100.0, regressors));
            }
            None => dropped_no_next_day += 1,
        }
    }

    let firms: Vec<String> = rows.iter().map(|r| r.0.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let dates: Vec<chrono::NaiveDate> = rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let observations = rows
        .into_iter()
        .map(|(t, d, y, x)| PanelObservation {
            firm_id: firms.binary_search(&t).unwrap(),
            date_id: dates.binary_search(&d).unwrap(),
            next_day_return: y,
            regressors: x,
        })
        .collect();
    let panel = Panel::new(
        firms,
        dates.iter().map(|d| d.to_string()).collect(),
        models.to_vec(),
        observations,
    )?;
    Ok(PanelAssembly {
        panel,
        dropped_no_next_day,
        dropped_missing_score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    #[default]
    TwoWay,
    Firm,
    Date,
    /// Heteroskedasticity-robust (each observation its own cluster).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub cluster: ClusterMode,
    /// Scale each cluster term by G/(G-1).
    pub small_sample_correction: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-10,
            max_sweeps: 100_000,
            cluster: ClusterMode::TwoWay,
            small_sample_correction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitStatistics {
    pub r2: f64,
    pub r2_adj: f64,
    pub r2_within: f64,
    pub r2_within_adj: f64,
    pub aic: f64,
    pub bic: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub regressor_names: Vec<String>,
    pub gamma: Vec<f64>,
    pub intercept: f64,
    pub firm_effects: Vec<f64>,
    pub date_effects: Vec<f64>,
    pub residuals: Vec<f64>,
    pub se_clustered: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub stats: FitStatistics,
    pub n_obs: usize,
    pub sweeps: usize,
    demeaned_x: DMatrix<f64>,
    demeaned_y: Vec<f64>,
    bread: DMatrix<f64>,
}

impl RegressionFit {
    pub fn demeaned_design(&self) -> &DMatrix<f64> {
        &self.demeaned_x
    }

    pub fn demeaned_response(&self) -> &[f64] {
        &self.demeaned_y
    }
}

struct Groups {
    firm: Vec<usize>,
    date: Vec<usize>,
    firm_count: Vec<f64>,
    date_count: Vec<f64>,
}

impl Groups {
    fn of(panel: &Panel) -> Self {
        let firm: Vec<usize> = panel.observations.iter().map(|o| o.firm_id).collect();
        let date: Vec<usize> = panel.observations.iter().map(|o| o.date_id).collect();
        let mut firm_count = vec![0.0; panel.firm_labels.len()];
        let mut date_count = vec![0.0; panel.date_labels.len()];
        for (&f, &d) in firm.iter().zip(&date) {
            firm_count[f] += 1.0;
            date_count[d] += 1.0;
        }
        Groups {
            firm,
            date,
            firm_count,
            date_count,
        }
    }

    fn group_means(ids: &[usize], counts: &[f64], values: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.resize(counts.len(), 0.0);
        for (&g, &v) in ids.iter().zip(values) {
            buf[g] += v;
        }
        for (m, &c) in buf.iter_mut().zip(counts) {
            if c > 0.0 {
                *m /= c;
            }
        }
    }

    /// Alternating projections onto the complement of the firm and date
    /// dummy spaces. Returns the sweeps used.
    fn demean(&self, values: &mut [f64], tolerance: f64, max_sweeps: usize) -> Result<usize> {
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tol = tolerance * scale;
        let mut means = Vec::new();
        let mut last_delta = f64::INFINITY;
        for sweep in 1..=max_sweeps {
            let mut delta = 0.0f64;
            Self::group_means(&self.firm, &self.firm_count, values, &mut means);
            for (v, &g) in values.iter_mut().zip(&self.firm) {
                *v -= means[g];
            }
            delta = means.iter().fold(delta, |m, x| m.max(x.abs()));
            Self::group_means(&self.date, &self.date_count, values, &mut means);
            for (v, &g) in values.iter_mut().zip(&self.date) {
                *v -= means[g];
            }
            delta = means.iter().fold(delta, |m, x| m.max(x.abs()));
            // The first sweep removes the bulk; convergence is judged from the second on.
            if sweep > 1 && delta <= tol {
                return Ok(sweep);
            }
            last_delta = delta;
        }
        Err(Error::Convergence {
            iterations: max_sweeps,
            last_delta,
        })
    }
}

fn check_identification(
    xd: &DMatrix<f64>,
    raw_ss: &[f64],
    names: &[String],
) -> Result<()> {
    let p = xd.ncols();
    let mut norms = Vec::with_capacity(p);
    for j in 0..p {
        let ss = xd.column(j).norm_squared();
        if ss == 0.0 || ss <= 1e-20 * raw_ss[j] {
            return Err(Error::Collinearity(names[j].clone()));
        }
        norms.push(ss.sqrt());
    }
    if p > 1 {
        let gram = xd.transpose() * xd;
        let corr = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (norms[i] * norms[j]));
        let eig = SymmetricEigen::new(corr);
        let (argmin, min) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        if min < 1e-10 {
            let vec = eig.eigenvectors.column(argmin);
            let involved: Vec<&str> = (0..p)
                .filter(|&j| vec[j].abs() > 1e-3)
                .map(|j| names[j].as_str())
                .collect();
            return Err(Error::Collinearity(involved.join("+")));
        }
    }
    Ok(())
}

/// Fits slopes, fixed effects, clustered standard errors and fit statistics.
pub fn fit_two_way_fe(panel: &Panel, options: &FitOptions) -> Result<RegressionFit> {
    let n = panel.len();
    let p = panel.n_regressors();
    if p == 0 {
        return Err(Error::InvalidInput("no regressors selected".into()));
    }
    if panel.firms_present() < 2 || panel.dates_present() < 2 {
        return Err(Error::InvalidInput("need at least 2 firms and 2 dates".into()));
    }
    let groups = Groups::of(panel);

    let y = panel.response();
    let mut yd = y.clone();
    let mut sweeps = groups.demean(&mut yd, options.tolerance, options.max_sweeps)?;

    let mut xd = DMatrix::zeros(n, p);
    let mut raw_ss = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = panel.column(j);
        raw_ss.push(col.iter().map(|v| v * v).sum::<f64>());
        sweeps = sweeps.max(groups.demean(&mut col, options.tolerance, options.max_sweeps)?);
        xd.set_column(j, &DVector::from_vec(col));
    }
    check_identification(&xd, &raw_ss, &panel.regressor_names)?;

    let gram = xd.transpose() * &xd;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Collinearity(panel.regressor_names.join("+")))?;
    let gamma_vec = chol.solve(&(xd.transpose() * DVector::from_column_slice(&yd)));
    let bread = chol.inverse();
    let gamma: Vec<f64> = gamma_vec.iter().copied().collect();

    let fitted = &xd * &gamma_vec;
    let residuals: Vec<f64> = yd.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();

    // Fixed-effect component of each observation.
    let fe_part: Vec<f64> = panel
        .observations
        .iter()
        .zip(&residuals)
        .map(|(o, e)| {
            let xg: f64 = o.regressors.iter().zip(&gamma).map(|(x, g)| x * g).sum();
            o.next_day_return - xg - e
        })
        .collect();
    let (intercept, firm_effects, date_effects, fe_sweeps) =
        decompose_effects(&groups, &fe_part, options.tolerance, options.max_sweeps)?;
    sweeps = sweeps.max(fe_sweeps);

    let mut fit = RegressionFit {
        regressor_names: panel.regressor_names.clone(),
        gamma,
        intercept,
        firm_effects,
        date_effects,
        residuals,
        se_clustered: Vec::new(),
        t_stats: Vec::new(),
        covariance: DMatrix::zeros(p, p),
        stats: FitStatistics {
            r2: f64::NAN,
            r2_adj: f64::NAN,
            r2_within: f64::NAN,
            r2_within_adj: f64::NAN,
            aic: f64::NAN,
            bic: f64::NAN,
            rmse: f64::NAN,
        },
        n_obs: n,
        sweeps,
        demeaned_x: xd,
        demeaned_y: yd,
        bread,
    };
    let (cov, se) = clustered_se(&fit, panel, options.cluster, options.small_sample_correction)?;
    fit.t_stats = fit.gamma.iter().zip(&se).map(|(g, s)| g / s).collect();
    fit.covariance = cov;
    fit.se_clustered = se;
    fit.stats = fit_statistics(&fit, panel)?;
    Ok(fit)
}

/// Splits per-observation fixed-effect values into intercept + firm + date
/// parts with zero-sum firm and date effects over the groups present.
fn decompose_effects(
    groups: &Groups,
    fe_part: &[f64],
    tolerance: f64,
    max_sweeps: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>, usize)> {
    let nf = groups.firm_count.len();
    let nd = groups.date_count.len();
    let mut a = vec![0.0; nf];
    let mut b = vec![0.0; nd];
    let scale = fe_part.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = tolerance * scale;
    let mut buf = vec![0.0; fe_part.len()];
    let mut means = Vec::new();
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        for (k, v) in buf.iter_mut().enumerate() {
            *v = fe_part[k] - b[groups.date[k]];
        }
        Groups::group_means(&groups.firm, &groups.firm_count, &buf, &mut means);
        let mut delta = a.iter().zip(&means).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        a.copy_from_slice(&means);
        for (k, v) in buf.iter_mut().enumerate() {
            *v = fe_part[k] - a[groups.firm[k]];
        }
        Groups::group_means(&groups.date, &groups.date_count, &buf, &mut means);
        delta = b.iter().zip(&means).fold(delta, |m, (x, y)| m.max((x - y).abs()));
        b.copy_from_slice(&means);
        if delta <= tol {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(Error::Convergence {
                iterations: max_sweeps,
                last_delta: delta,
            });
        }
    }
    let present_mean = |v: &[f64], counts: &[f64]| {
        let (s, k) = v
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0.0)
            .fold((0.0, 0.0), |(s, k), (x, _)| (s + x, k + 1.0));
        s / k
    };
    let ma = present_mean(&a, &groups.firm_count);
    let mb = present_mean(&b, &groups.date_count);
    for (x, &c) in a.iter_mut().zip(&groups.firm_count) {
        *x = if c > 0.0 { *x - ma } else { 0.0 };
    }
    for (x, &c) in b.iter_mut().zip(&groups.date_count) {
        *x = if c > 0.0 { *x - mb } else { 0.0 };
    }
    Ok((ma + mb, a, b, sweeps))
}

fn cluster_meat(xd: &DMatrix<f64>, resid: &[f64], ids: &[usize], n_groups: usize) -> (DMatrix<f64>, usize) {
    let p = xd.ncols();
    let mut scores = DMatrix::zeros(n_groups, p);
    let mut used = vec![false; n_groups];
    for (i, (&g, &e)) in ids.iter().zip(resid).enumerate() {
        used[g] = true;
        for j in 0..p {
            scores[(g, j)] += xd[(i, j)] * e;
        }
    }
    (scores.transpose() * &scores, used.iter().filter(|&&u| u).count())
}

/// Cluster-robust covariance of the slopes and its standard errors.
///
/// Two-way: `V_firm + V_date - V_obs`; every (firm, date) cell holds one
/// observation, so the intersection term is the heteroskedasticity-robust one.
pub fn clustered_se(
    fit: &RegressionFit,
    panel: &Panel,
    mode: ClusterMode,
    small_sample_correction: bool,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let xd = &fit.demeaned_x;
    let resid = &fit.residuals;
    let groups = Groups::of(panel);
    let obs_ids: Vec<usize> = (0..resid.len()).collect();
    let term = |ids: &[usize], n_groups: usize| {
        let (meat, g) = cluster_meat(xd, resid, ids, n_groups);
        let c = if small_sample_correction && g > 1 {
            g as f64 / (g as f64 - 1.0)
        } else {
            1.0
        };
        &fit.bread * meat * &fit.bread * c
    };
    let v_firm = || term(&groups.firm, panel.firm_labels.len());
    let v_date = || term(&groups.date, panel.date_labels.len());
    let v_obs = || term(&obs_ids, resid.len());
    let cov = match mode {
        ClusterMode::TwoWay => v_firm() + v_date() - v_obs(),
        ClusterMode::Firm => v_firm(),
        ClusterMode::Date => v_date(),
        ClusterMode::None => v_obs(),
    };
    let mut se = Vec::with_capacity(cov.nrows());
    for j in 0..cov.nrows() {
        let v = cov[(j, j)];
        if !(v >= 0.0) {
            return Err(Error::Numerical(format!(
                "negative clustered variance {v:e} for {}",
                fit.regressor_names[j]
            )));
        }
        se.push(v.sqrt());
    }
    Ok((cov, se))
}

pub fn fit_statistics(fit: &RegressionFit, panel: &Panel) -> Result<FitStatistics> {
    fit_statistics_from(
        &fit.residuals,
        &panel.response(),
        &fit.demeaned_y,
        fit.gamma.len(),
        panel.firms_present(),
        panel.dates_present(),
    )
}

/// `k = n_regressors + (firms - 1) + (dates - 1) + 1`.
pub fn fit_statistics_from(
    residuals: &[f64],
    y: &[f64],
    y_demeaned: &[f64],
    n_regressors: usize,
    n_firms: usize,
    n_dates: usize,
) -> Result<FitStatistics> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let sst_within = y_demeaned.iter().map(|v| v * v).sum::<f64>();
    if !(sst > 0.0) || !(sst_within > 0.0) {
        return Err(Error::Numerical("zero total sum of squares".into()));
    }
    let ssr = residuals.iter().map(|e| e * e).sum::<f64>();
    let k = (n_regressors + n_firms.saturating_sub(1) + n_dates.saturating_sub(1) + 1) as f64;
    let adjust = |r2: f64| {
        if n > k {
            1.0 - (1.0 - r2) * (n - 1.0) / (n - k)
        } else {
            f64::NAN
        }
    };
    let r2 = 1.0 - ssr / sst;
    let r2_within = 1.0 - ssr / sst_within;
    let log_term = n * (ssr / n).ln();
    Ok(FitStatistics {
        r2,
        r2_adj: adjust(r2),
        r2_within,
        r2_within_adj: adjust(r2_within),
        aic: log_term + 2.0 * k,
        bic: log_term + k * n.ln(),
        rmse: (ssr / n).sqrt(),
    })
}
