//! CSV and manifest output. Reals are written as `{:.16e}` (17 significant
//! digits, `.` separator) and missing values as `NaN`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{
    CoverageReport, CurveCell, CurveReport, ExperimentPlan, NormalityReport, RateReport,
};
use crate::Result;

pub const REPORT_HEADER: &str = "scenario,n,nsr,h,cp,al,mean_bias,mise,ks,m_defined,m_flagged,seed";

pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

/// One row of the summary report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub n: usize,
    pub nsr: f64,
    pub h: f64,
    pub cp: f64,
    pub al: f64,
    pub mean_bias: f64,
    pub mise: f64,
    pub ks: f64,
    pub m_defined: usize,
    pub m_flagged: usize,
    pub seed: u64,
}

impl ReportRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.n,
            format_real(self.nsr),
            format_real(self.h),
            format_real(self.cp),
            format_real(self.al),
            format_real(self.mean_bias),
            format_real(self.mise),
            format_real(self.ks),
            self.m_defined,
            self.m_flagged,
            self.seed
        )
    }
}

/// File-name stem of a cell: scenario, n, nsr and the bandwidth (`default`
/// for the data-driven rule).
pub fn cell_key(scenario: &str, n: usize, nsr: f64, h: Option<f64>) -> String {
    let slug: String = scenario
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect();
    let slug = slug.trim_matches('-').to_string();
    let h = h.map_or_else(|| "default".to_string(), |h| h.to_string());
    format!("{slug}_n{n}_nsr{nsr}_h{h}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_lines(path: &Path, header: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let io = |e: std::io::Error| crate::Error::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    writeln!(w, "{header}").map_err(io)?;
    for line in lines {
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_lines(
        path,
        REPORT_HEADER,
        rows.iter().map(|r| ReportRow { scenario: csv_field(&r.scenario), ..r.clone() }.csv()),
    )
}

/// `key = value` lines.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let io = |e: std::io::Error| crate::Error::Io(format!("cannot write {}: {e}", path.display()));
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(path, text).map_err(io)
}

/// Cell keys a plan produces, in report order.
pub(super) fn plan_cell_keys(plan: &ExperimentPlan) -> Vec<(usize, f64, Option<f64>, String)> {
    let hs = super::cell_bandwidths(plan);
    let mut keys = Vec::new();
    for &n in &plan.sample_sizes {
        for &nsr in &plan.nsr_levels {
            for &h in &hs {
                keys.push((n, nsr, h, cell_key(&plan.scenario.to_string(), n, nsr, h)));
            }
        }
    }
    keys
}

impl ExperimentPlan {
    /// Names of the files an experiment writes into its output directory,
    /// known before it runs.
    pub fn planned_outputs(&self, mode: &str) -> Vec<String> {
        let mut out = vec!["report.csv".to_string()];
        let keys = plan_cell_keys(self);
        match mode {
            "curves" => {
                for k in &keys {
                    out.push(format!("curves_{}.csv", k.3));
                    out.push(format!("replications_{}.csv", k.3));
                }
            }
            "coverage" => out.extend(keys.iter().map(|k| format!("coverage_{}.csv", k.3))),
            "normality" => out.extend(keys.iter().map(|k| format!("standardized_{}.csv", k.3))),
            "rates" => {
                out.push("rates_bias.csv".into());
                out.push("rates_variance.csv".into());
            }
            _ => {}
        }
        out
    }
}

fn key_of(scenario: &str, n: usize, nsr: f64, h: f64, fixed: bool) -> String {
    cell_key(scenario, n, nsr, fixed.then_some(h))
}

impl CurveCell {
    fn key(&self, scenario: &str) -> String {
        key_of(scenario, self.n, self.nsr, self.bandwidth, self.bandwidth_fixed)
    }
}

impl CurveReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.cells
            .iter()
            .map(|c| ReportRow {
                scenario: self.scenario.clone(),
                n: c.n,
                nsr: c.nsr,
                h: c.bandwidth,
                cp: f64::NAN,
                al: f64::NAN,
                mean_bias: c.mean_bias,
                mise: c.mise,
                ks: f64::NAN,
                m_defined: c.curves.len() - c.failures.len(),
                m_flagged: c.failures.len(),
                seed: self.master_seed,
            })
            .collect()
    }

    /// `curves_<key>.csv` (x, truth, mean, p05, p95) and
    /// `replications_<key>.csv` (x and one column per replication).
    pub fn write_sidecars(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for c in &self.cells {
            let key = c.key(&self.scenario);
            let path = dir.join(format!("curves_{key}.csv"));
            write_lines(
                &path,
                "x,truth,mean,p05,p95",
                (0..self.grid.len()).map(|j| {
                    let truth = c.truth.as_ref().map_or(f64::NAN, |t| t[j]);
                    format!(
                        "{},{},{},{},{}",
                        format_real(self.grid[j]),
                        format_real(truth),
                        format_real(c.mean_curve[j]),
                        format_real(c.p05[j]),
                        format_real(c.p95[j])
                    )
                }),
            )?;
            paths.push(path);

            let path = dir.join(format!("replications_{key}.csv"));
            let header = std::iter::once("x".to_string())
                .chain((0..c.curves.len()).map(|r| format!("rep{r}")))
                .collect::<Vec<_>>()
                .join(",");
            write_lines(
                &path,
                &header,
                (0..self.grid.len()).map(|j| {
                    std::iter::once(format_real(self.grid[j]))
                        .chain(c.curves.iter().map(|cv| format_real(cv.as_ref().map_or(f64::NAN, |v| v[j]))))
                        .collect::<Vec<_>>()
                        .join(",")
                }),
            )?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn failed_cells(&self) -> Vec<String> {
        self.cells.iter().filter(|c| c.failed).map(|c| c.key(&self.scenario)).collect()
    }
}

impl CoverageReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.cells
            .iter()
            .map(|c| ReportRow {
                scenario: self.scenario.clone(),
                n: c.n,
                nsr: c.nsr,
                h: c.bandwidth,
                cp: c.cp,
                al: c.al,
                mean_bias: c.mean_bias,
                mise: f64::NAN,
                ks: f64::NAN,
                m_defined: c.contained + c.missed,
                m_flagged: c.undefined,
                seed: self.master_seed,
            })
            .collect()
    }

    /// `coverage_<key>.csv` with one row per replication.
    pub fn write_sidecars(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for c in &self.cells {
            let key = key_of(&self.scenario, c.n, c.nsr, c.bandwidth, c.bandwidth_fixed);
            let path = dir.join(format!("coverage_{key}.csv"));
            write_lines(
                &path,
                "rep,seed,h,lambda_n,sigma_n_sq,ci_lower,ci_upper,covered",
                c.replications.iter().enumerate().map(|(i, r)| {
                    let (lo, hi) = r.interval.unwrap_or((f64::NAN, f64::NAN));
                    let covered = match r.interval {
                        Some((lo, hi)) => (lo <= c.true_hazard && c.true_hazard <= hi).to_string(),
                        None => "undefined".into(),
                    };
                    format!(
                        "{i},{},{},{},{},{},{},{covered}",
                        r.seed,
                        format_real(r.bandwidth),
                        format_real(r.lambda),
                        format_real(r.sigma_sq),
                        format_real(lo),
                        format_real(hi)
                    )
                }),
            )?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn failed_cells(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter(|c| c.failed)
            .map(|c| key_of(&self.scenario, c.n, c.nsr, c.bandwidth, c.bandwidth_fixed))
            .collect()
    }
}

impl NormalityReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.cells
            .iter()
            .map(|c| ReportRow {
                scenario: self.scenario.clone(),
                n: c.n,
                nsr: c.nsr,
                h: c.bandwidth,
                cp: f64::NAN,
                al: f64::NAN,
                mean_bias: c.mean_bias,
                mise: f64::NAN,
                ks: c.ks,
                m_defined: c.m_defined,
                m_flagged: c.replications.len() - c.m_defined,
                seed: self.master_seed,
            })
            .collect()
    }

    /// `standardized_<key>.csv`: rank, normal quantile, and the sorted
    /// standardized values under both scalings.
    pub fn write_sidecars(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for c in &self.cells {
            let key = key_of(&self.scenario, c.n, c.nsr, c.bandwidth, c.bandwidth_fixed);
            let path = dir.join(format!("standardized_{key}.csv"));
            let plug = c.probability_plot(true);
            let emp = c.probability_plot(false);
            write_lines(
                &path,
                "rank,normal_quantile,s_plugin,s_empirical",
                emp.iter().enumerate().map(|(i, e)| {
                    let p = plug.get(i).map_or(f64::NAN, |p| p.1);
                    format!("{},{},{},{}", i + 1, format_real(e.0), format_real(p), format_real(e.1))
                }),
            )?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn failed_cells(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter(|c| c.failed)
            .map(|c| key_of(&self.scenario, c.n, c.nsr, c.bandwidth, c.bandwidth_fixed))
            .collect()
    }
}

impl RateReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.bias
            .iter()
            .map(|b| ReportRow {
                scenario: self.scenario.clone(),
                n: b.n,
                nsr: b.nsr,
                h: b.bandwidth,
                cp: f64::NAN,
                al: f64::NAN,
                mean_bias: b.bias_h,
                mise: f64::NAN,
                ks: f64::NAN,
                m_defined: b.m_defined,
                m_flagged: b.failures,
                seed: self.master_seed,
            })
            .collect()
    }

    /// `rates_bias.csv` and `rates_variance.csv`.
    pub fn write_sidecars(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let bias_path = dir.join("rates_bias.csv");
        write_lines(
            &bias_path,
            "n,nsr,h,bias_h,bias_half,se_h,se_half,ratio,m_defined",
            self.bias.iter().map(|b| {
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    b.n,
                    format_real(b.nsr),
                    format_real(b.bandwidth),
                    format_real(b.bias_h),
                    format_real(b.bias_half),
                    format_real(b.se_h),
                    format_real(b.se_half),
                    format_real(b.ratio),
                    b.m_defined
                )
            }),
        )?;
        let var_path = dir.join("rates_variance.csv");
        write_lines(
            &var_path,
            "nsr,h,n,scaled_variance,m_defined,max_min_ratio",
            self.variance.iter().flat_map(|v| {
                v.records.iter().map(move |r| {
                    format!(
                        "{},{},{},{},{},{}",
                        format_real(v.nsr),
                        format_real(v.bandwidth),
                        r.n,
                        format_real(r.scaled_variance),
                        r.m_defined,
                        format_real(v.ratio)
                    )
                })
            }),
        )?;
        Ok(vec![bias_path, var_path])
    }

    pub fn failed_cells(&self) -> Vec<String> {
        self.bias
            .iter()
            .filter(|b| b.failed)
            .map(|b| cell_key(&self.scenario, b.n, b.nsr, Some(b.bandwidth)))
            .collect()
    }
}
