//! Summary metrics of a Monte Carlo run and their JSON, CSV and Markdown forms.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::monte_carlo::MonteCarloConfig;
use crate::error::Result;

/// z quantile of the two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

/// Aggregates for one estimator, coefficient and scenario.
///
/// RE of a replicate is (SE_reference / SE_method)²; `re_gain` is the share
/// of replicates with RE > 1, `mre` the mean RE and `rsd` the ratio of Monte
/// Carlo standard deviations, reference over method. They are absent for the
/// reference itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: String,
    pub term: usize,
    pub beta11: f64,
    pub truth: f64,
    pub successes: usize,
    pub est: f64,
    pub se: f64,
    pub mc_sd: f64,
    pub rmse: f64,
    pub cp: f64,
    pub re_gain: Option<f64>,
    pub mre: Option<f64>,
    pub rsd: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v.iter().copied());
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl ReportRow {
    /// `own` holds (β̂, SE) per successful replicate; `paired` holds
    /// ((β̂, SE) of the reference, (β̂, SE) of this estimator).
    pub fn summarize(
        estimator: &str,
        term: usize,
        beta11: f64,
        truth: f64,
        own: &[(f64, f64)],
        paired: Option<&[((f64, f64), (f64, f64))]>,
    ) -> Self {
        let est: Vec<f64> = own.iter().map(|p| p.0).collect();
        let covered = own.iter().filter(|(b, s)| (b - truth).abs() <= Z95 * s).count();
        let (re_gain, mre, rsd) = match paired {
            Some(p) if !p.is_empty() => {
                let re: Vec<f64> = p.iter().map(|(r, m)| (r.1 / m.1).powi(2)).collect();
                let ref_est: Vec<f64> = p.iter().map(|(r, _)| r.0).collect();
                let own_est: Vec<f64> = p.iter().map(|(_, m)| m.0).collect();
                (
                    Some(re.iter().filter(|&&x| x > 1.0).count() as f64 / re.len() as f64),
                    Some(mean(re.iter().copied())),
                    Some(sd(&ref_est) / sd(&own_est)),
                )
            }
            _ => (None, None, None),
        };
        Self {
            estimator: estimator.to_string(),
            term,
            beta11,
            truth,
            successes: own.len(),
            est: mean(est.iter().copied()),
            se: mean(own.iter().map(|p| p.1)),
            mc_sd: sd(&est),
            rmse: mean(est.iter().map(|b| (b - truth).powi(2))).sqrt(),
            cp: if own.is_empty() { f64::NAN } else { covered as f64 / own.len() as f64 },
            re_gain,
            mre,
            rsd,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replicates: usize,
    pub seed: u64,
    pub reference: Option<String>,
    pub rows: Vec<ReportRow>,
    /// Failed replicates per estimator, summed over scenarios.
    pub failures: BTreeMap<String, usize>,
    pub config: MonteCarloConfig,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

impl SimulationReport {
    pub fn row(&self, estimator: &str, beta11: f64, term: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.beta11 == beta11 && r.term == term)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "estimator", "term", "beta11", "truth", "successes", "est", "se", "mc_sd", "rmse", "cp", "re_gain", "mre", "rsd",
        ])?;
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.term.to_string(),
                r.beta11.to_string(),
                r.truth.to_string(),
                r.successes.to_string(),
                r.est.to_string(),
                r.se.to_string(),
                r.mc_sd.to_string(),
                r.rmse.to_string(),
                r.cp.to_string(),
                o(r.re_gain),
                o(r.mre),
                o(r.rsd),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Markdown table laid out as Method | β11 | Est | SE | SD | RMSE | CP | %RE gain | mRE | RSD.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| Method | β11 | Term | Est | SE | SD | RMSE | CP | %RE gain | mRE | RSD |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|");
        let mut labels: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.estimator.as_str()) {
                labels.push(&r.estimator);
            }
        }
        for label in labels {
            for r in self.rows.iter().filter(|r| r.estimator == label) {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {} | {} | {} |",
                    r.estimator,
                    r.beta11,
                    r.term,
                    r.est,
                    r.se,
                    r.mc_sd,
                    r.rmse,
                    r.cp,
                    r.re_gain.map(|g| format!("{:.1}%", 100.0 * g)).unwrap_or_else(|| "-".into()),
                    opt(r.mre, 3),
                    opt(r.rsd, 3)
                );
            }
        }
        let _ = writeln!(out, "\n{} replicates, seed {}.", self.replicates, self.seed);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replicate_metrics() {
        let r = ReportRow::summarize("m", 0, 0.2, -0.2, &[(-0.25, 0.1)], None);
        assert_eq!(r.est, -0.25);
        assert_eq!(r.cp, 1.0);
        assert_eq!(r.mc_sd, 0.0);
        assert!((r.rmse - 0.05).abs() < 1e-15);
        let miss = ReportRow::summarize("m", 0, 0.2, -0.2, &[(0.5, 0.1)], None);
        assert_eq!(miss.cp, 0.0);
    }

    #[test]
    fn relative_efficiency() {
        let paired = [((0.0, 0.2), (0.1, 0.1)), ((1.0, 0.2), (0.4, 0.4))];
        let r = ReportRow::summarize("m", 0, 0.2, 0.0, &[(0.1, 0.1), (0.4, 0.4)], Some(&paired));
        assert_eq!(r.re_gain, Some(0.5));
        assert!((r.mre.unwrap() - (4.0 + 0.25) / 2.0).abs() < 1e-15);
        assert!((r.rsd.unwrap() - (0.5f64.sqrt() / (0.045f64).sqrt())).abs() < 1e-12);
    }
}
