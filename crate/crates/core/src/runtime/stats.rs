//! Sample statistics, the forward-versus-reference equivalence check and
//! SBC rank uniformity.

use std::fmt::{self, Write};

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::table::DrawTable;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator n - 1.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Effective sample size by Geyer's initial positive sequence: sum
/// autocorrelations in adjacent pairs until a pair sum turns negative.
/// Capped at `n`.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0;
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = if lag == 0 {
            1.0 + rho(1)
        } else {
            rho(lag) + rho(lag + 1)
        };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` with effective size `n`
/// (Stephens' small-sample correction).
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        p += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Largest acceptable |z| for means and standard deviations.
    pub z: f64,
    /// KS significance level.
    pub ks_alpha: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            z: 4.0,
            ks_alpha: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnReport {
    pub column: String,
    pub mean: (f64, f64),
    pub sd: (f64, f64),
    pub ess: (f64, f64),
    pub z_mean: f64,
    pub z_sd: f64,
    pub ks: f64,
    pub ks_p: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableReport {
    pub var: String,
    pub columns: Vec<ColumnReport>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub variables: Vec<VariableReport>,
    pub tolerances: Tolerances,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn variable(&self, v: &str) -> Option<&VariableReport> {
        self.variables.iter().find(|r| r.var == v)
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>10} {:>10} {:>7} {:>10} {:>10} {:>7} {:>7} {:>9} {:>9}  result",
            "column", "mean fwd", "mean ref", "z", "sd fwd", "sd ref", "z", "KS", "KS p", "ESS ref"
        )?;
        for v in &self.variables {
            for c in &v.columns {
                writeln!(
                    f,
                    "{:<12} {:>10.4} {:>10.4} {:>7.2} {:>10.4} {:>10.4} {:>7.2} {:>7.4} {:>9.2e} {:>9.0}  {}",
                    c.column,
                    c.mean.0,
                    c.mean.1,
                    c.z_mean,
                    c.sd.0,
                    c.sd.1,
                    c.z_sd,
                    c.ks,
                    c.ks_p,
                    c.ess.1,
                    if c.pass { "pass" } else { "FAIL" }
                )?;
            }
        }
        for v in &self.variables {
            writeln!(f, "{}: {}", v.var, if v.pass { "PASS" } else { "FAIL" })?;
        }
        write!(f, "overall: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Standard error of the sample standard deviation from the fourth central
/// moment, with `n` effective draws.
fn sd_se(x: &[f64], n: f64) -> f64 {
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    if m2 == 0.0 {
        return 0.0;
    }
    ((m4 - m2 * m2).max(0.0) / n).sqrt() / (2.0 * m2.sqrt())
}

fn compare(column: &str, a: &[f64], b: &[f64], tol: &Tolerances) -> ColumnReport {
    let (ea, eb) = (ess(a), ess(b));
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (sd(a), sd(b));
    let z = |diff: f64, se: f64| {
        if diff == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            diff.abs() / se
        }
    };
    let z_mean = z(ma - mb, (sa * sa / ea + sb * sb / eb).sqrt());
    let sq = |x: &[f64]| -> f64 {
        let m = mean(x);
        ess(&x.iter().map(|v| (v - m).powi(2)).collect::<Vec<_>>())
    };
    let z_sd = z(sa - sb, (sd_se(a, sq(a)).powi(2) + sd_se(b, sq(b)).powi(2)).sqrt());
    let ks = ks_statistic(a, b);
    let ks_p = ks_pvalue(ks, ea * eb / (ea + eb));
    ColumnReport {
        column: column.to_string(),
        mean: (ma, mb),
        sd: (sa, sb),
        ess: (ea, eb),
        z_mean,
        z_sd,
        ks,
        ks_p,
        pass: z_mean <= tol.z && z_sd <= tol.z && ks_p >= tol.ks_alpha,
    }
}

/// Compare every column of `forward` with the same column of `reference`:
/// means and standard deviations by z-tests on effective-sample-size
/// adjusted standard errors, distributions by a two-sample KS test.
pub fn equivalence_check(
    forward: &DrawTable,
    reference: &DrawTable,
    tol: &Tolerances,
) -> Result<EquivalenceReport, String> {
    let mut fc = forward.columns.clone();
    let mut rc = reference.columns.clone();
    fc.sort();
    rc.sort();
    if fc != rc {
        return Err(format!(
            "column sets differ: [{}] vs [{}]",
            forward.columns.join(", "),
            reference.columns.join(", ")
        ));
    }
    if forward.nrows() < 2 || reference.nrows() < 2 {
        return Err("need at least two draws on each side".into());
    }
    let mut variables = Vec::new();
    for v in forward.variables() {
        let columns: Vec<ColumnReport> = forward
            .var_columns(&v)
            .into_iter()
            .map(|i| {
                let name = &forward.columns[i];
                compare(
                    name,
                    &forward.column(name).unwrap(),
                    &reference.column(name).unwrap(),
                    tol,
                )
            })
            .collect();
        let pass = columns.iter().all(|c| c.pass);
        variables.push(VariableReport { var: v, columns, pass });
    }
    let pass = variables.iter().all(|v| v.pass);
    Ok(EquivalenceReport {
        variables,
        tolerances: *tol,
        pass,
    })
}

/// Number of posterior draws strictly below the prior draw.
pub fn sbc_rank(prior: f64, posterior: &[f64]) -> usize {
    posterior.iter().filter(|&&x| x < prior).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Uniformity {
    pub counts: Vec<usize>,
    pub chi_square: f64,
    pub p_value: f64,
}

/// Chi-square test that ranks in `0..=max_rank` are uniform, using `bins`
/// equal-width bins. `bins` must divide `max_rank + 1`.
pub fn rank_uniformity(ranks: &[usize], max_rank: usize, bins: usize) -> Uniformity {
    let per = (max_rank + 1) / bins;
    let mut counts = vec![0usize; bins];
    for &r in ranks {
        counts[(r / per).min(bins - 1)] += 1;
    }
    let expected = ranks.len() as f64 / bins as f64;
    let chi_square = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let p_value = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi_square);
    Uniformity {
        counts,
        chi_square,
        p_value,
    }
}

impl fmt::Display for Uniformity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut counts = String::new();
        for c in &self.counts {
            write!(counts, " {c}")?;
        }
        write!(
            f,
            "chi2 = {:.3}, p = {:.4}, counts:{counts}",
            self.chi_square, self.p_value
        )
    }
}
