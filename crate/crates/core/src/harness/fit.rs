//! Rate exponents fitted to a convergence table, and exceedance curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::convergence::{scale, ConvergenceTable};
use crate::error::{Error, Result};
use crate::stats::{mean, ols, quantile};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_0f_b007;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    /// Regress `log e` on `log N`.
    None,
    /// Regress `log(e / √log N)` on `log N`.
    SqrtLog,
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "sqrt-log" => Ok(Self::SqrtLog),
            other => Err(Error::Config(format!("unknown correction '{other}'"))),
        }
    }
}

impl std::fmt::Display for Correction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::SqrtLog => "sqrt-log",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub correction: Correction,
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile-bootstrap interval for the slope, widened if needed so
    /// that it contains the point estimate.
    pub ci: (f64, f64),
    pub resamples: usize,
}

impl RateFit {
    pub fn ci_width(&self) -> f64 {
        self.ci.1 - self.ci.0
    }

    /// `e^{intercept}`: the constant in front of `N^{slope}` (times `√log N`
    /// under the correction).
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

fn response(err: f64, n: u64, corr: Correction) -> f64 {
    match corr {
        Correction::None => err.ln(),
        Correction::SqrtLog => (err / (n as f64).ln().sqrt()).ln(),
    }
}

pub fn fit_rate(table: &ConvergenceTable, correction: Correction) -> Result<RateFit> {
    fit_rate_with(table, correction, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED)
}

/// OLS of the (corrected) log mean error on `log N`, with a bootstrap over
/// replicates within each row.
pub fn fit_rate_with(table: &ConvergenceTable, correction: Correction, resamples: usize, seed: u64) -> Result<RateFit> {
    if table.rows.len() < 4 {
        return Err(Error::DegenerateFit(format!("need at least 4 rows, got {}", table.rows.len())));
    }
    if let Some(r) = table.rows.iter().find(|r| !(r.mean_sup_err > 0.0)) {
        return Err(Error::DegenerateFit(format!("mean error at N={} is {}", r.n, r.mean_sup_err)));
    }
    if correction == Correction::SqrtLog && table.rows.iter().any(|r| r.n < 2) {
        return Err(Error::DegenerateFit("sqrt-log correction needs N >= 2".into()));
    }
    let x: Vec<f64> = table.rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| response(r.mean_sup_err, r.n, correction)).collect();
    let (slope, intercept) = ols(&x, &y);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    let mut yb = vec![0.0; y.len()];
    for _ in 0..resamples {
        let mut ok = true;
        for (i, row) in table.rows.iter().enumerate() {
            let m = row.errors.len();
            let draw: Vec<f64> = (0..m).map(|_| row.errors[rng.gen_range(0..m)]).collect();
            let mb = mean(&draw);
            if !(mb > 0.0) {
                ok = false;
            }
            yb[i] = response(mb, row.n, correction);
        }
        if ok {
            slopes.push(ols(&x, &yb).0);
        }
    }
    let (lo, hi) = if slopes.is_empty() {
        (slope, slope)
    } else {
        (quantile(&slopes, 0.025).min(slope), quantile(&slopes, 0.975).max(slope))
    };
    Ok(RateFit { correction, slope, intercept, ci: (lo, hi), resamples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub n: Vec<u64>,
    pub multipliers: Vec<f64>,
    /// Fraction of replicates with error above `K₂√(log N / N)`, indexed
    /// `[multiplier][row]`.
    pub fractions: Vec<Vec<f64>>,
    /// `(log N) / N` per row, the reference decay.
    pub reference: Vec<f64>,
}

pub fn exceedance_probe(table: &ConvergenceTable, multipliers: &[f64]) -> ExceedanceCurve {
    let fractions = multipliers
        .iter()
        .map(|&k2| {
            table
                .rows
                .iter()
                .map(|row| {
                    let thr = k2 * scale(row.n);
                    row.errors.iter().filter(|&&e| e > thr).count() as f64 / row.errors.len() as f64
                })
                .collect()
        })
        .collect();
    ExceedanceCurve {
        n: table.rows.iter().map(|r| r.n).collect(),
        multipliers: multipliers.to_vec(),
        fractions,
        reference: table.rows.iter().map(|r| (r.n as f64).ln() / r.n as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::convergence::ConvergenceRow;

    fn synthetic(f: impl Fn(f64) -> f64) -> ConvergenceTable {
        let mut t = ConvergenceTable::empty("synthetic", 1.0);
        for n in [100u64, 316, 1000, 3162, 10000] {
            let e = f(n as f64);
            t.rows.push(ConvergenceRow::from_errors(n, vec![e; 40]));
        }
        t
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_rate(&synthetic(|n| 3.0 / n.sqrt()), Correction::None).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.prefactor() - 3.0).abs() < 1e-10);
        assert!(fit.ci.0 <= fit.slope && fit.slope <= fit.ci.1);
    }

    #[test]
    fn sqrt_log_law() {
        let fit = fit_rate(&synthetic(|n| 0.7 * (n.ln() / n).sqrt()), Correction::SqrtLog).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_is_degenerate() {
        let mut t = synthetic(|n| 1.0 / n);
        t.rows[2] = ConvergenceRow::from_errors(1000, vec![0.0; 5]);
        assert!(matches!(fit_rate(&t, Correction::None), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn exceedance_extremes() {
        let t = synthetic(|n| 1.0 / n.sqrt());
        let c = exceedance_probe(&t, &[0.0, 1e12]);
        assert!(c.fractions[0].iter().all(|&f| f == 1.0));
        assert!(c.fractions[1].iter().all(|&f| f == 0.0));
    }
}
