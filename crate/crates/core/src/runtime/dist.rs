//! Log densities, CDFs and random draws for the builtin distributions.
//!
//! Parameters are checked first: invalid parameters are an error for draws
//! and CDFs and a log density of negative infinity otherwise. A variate
//! outside the support also has log density negative infinity.

use rand::Rng;
use rand_distr::Distribution;
use statrs::distribution::{self as sd, ContinuousCDF, DiscreteCDF};
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn is_count(x: f64) -> bool {
    x >= 0.0 && x.fract() == 0.0 && x.is_finite()
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Reject invalid parameters with a message naming the distribution.
pub fn check_params(dist: &str, p: &[f64]) -> Result<(), String> {
    let ok = match (dist, p) {
        ("normal" | "lognormal", [mu, s]) => mu.is_finite() && *s > 0.0 && s.is_finite(),
        ("exponential", [rate]) => *rate > 0.0 && rate.is_finite(),
        ("gamma", [a, b]) => *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite(),
        ("beta", [a, b]) => *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite(),
        ("uniform", [lo, hi]) => lo.is_finite() && hi.is_finite() && lo < hi,
        ("bernoulli", [q]) => is_prob(*q),
        ("poisson", [rate]) => *rate > 0.0 && rate.is_finite(),
        ("binomial", [n, q]) => is_count(*n) && is_prob(*q),
        _ => return Err(format!("unknown distribution `{dist}` with {} parameter(s)", p.len())),
    };
    if ok {
        Ok(())
    } else {
        let shown: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        Err(format!("invalid parameters for {dist}({})", shown.join(", ")))
    }
}

/// Log density (or mass) of `x`.
pub fn lpdf(dist: &str, x: f64, p: &[f64]) -> f64 {
    if check_params(dist, p).is_err() || x.is_nan() {
        return f64::NEG_INFINITY;
    }
    match (dist, p) {
        ("normal", [mu, s]) => {
            let z = (x - mu) / s;
            -0.5 * z * z - s.ln() - LN_SQRT_2PI
        }
        ("lognormal", [mu, s]) if x > 0.0 => {
            let z = (x.ln() - mu) / s;
            -0.5 * z * z - s.ln() - LN_SQRT_2PI - x.ln()
        }
        ("exponential", [rate]) if x >= 0.0 => rate.ln() - rate * x,
        ("gamma", [a, b]) if x > 0.0 => a * b.ln() - ln_gamma(*a) + (a - 1.0) * x.ln() - b * x,
        ("beta", [a, b]) if x > 0.0 && x < 1.0 => (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(*a, *b),
        ("uniform", [lo, hi]) if x >= *lo && x <= *hi => -(hi - lo).ln(),
        ("bernoulli", [q]) if x == 1.0 => q.ln(),
        ("bernoulli", [q]) if x == 0.0 => (1.0 - q).ln(),
        ("poisson", [rate]) if is_count(x) => x * rate.ln() - rate - ln_gamma(x + 1.0),
        ("binomial", [n, q]) if is_count(x) && x <= *n => {
            let k = x as u64;
            let m = *n as u64;
            let mut lp = ln_binomial(m, k);
            if k > 0 {
                lp += x * q.ln();
            }
            if k < m {
                lp += (n - x) * (1.0 - q).ln();
            }
            lp
        }
        _ => f64::NEG_INFINITY,
    }
}

pub fn cdf(dist: &str, x: f64, p: &[f64]) -> Result<f64, String> {
    check_params(dist, p)?;
    let count = |x: f64| if x < 0.0 { None } else { Some(x.floor() as u64) };
    Ok(match (dist, p) {
        ("normal", [mu, s]) => sd::Normal::new(*mu, *s).map_err(msg)?.cdf(x),
        ("lognormal", [mu, s]) => sd::LogNormal::new(*mu, *s).map_err(msg)?.cdf(x),
        ("exponential", [rate]) => sd::Exp::new(*rate).map_err(msg)?.cdf(x),
        ("gamma", [a, b]) => sd::Gamma::new(*a, *b).map_err(msg)?.cdf(x),
        ("beta", [a, b]) => sd::Beta::new(*a, *b).map_err(msg)?.cdf(x.clamp(0.0, 1.0)),
        ("uniform", [lo, hi]) => sd::Uniform::new(*lo, *hi).map_err(msg)?.cdf(x),
        ("bernoulli", [q]) => match count(x) {
            None => 0.0,
            Some(k) => sd::Bernoulli::new(*q).map_err(msg)?.cdf(k),
        },
        ("poisson", [rate]) => match count(x) {
            None => 0.0,
            Some(k) => sd::Poisson::new(*rate).map_err(msg)?.cdf(k),
        },
        ("binomial", [n, q]) => match count(x) {
            None => 0.0,
            Some(k) => sd::Binomial::new(*q, *n as u64).map_err(msg)?.cdf(k),
        },
        _ => unreachable!("checked above"),
    })
}

/// One draw. Discrete distributions return integral values.
pub fn draw<R: Rng + ?Sized>(dist: &str, p: &[f64], rng: &mut R) -> Result<f64, String> {
    check_params(dist, p)?;
    Ok(match (dist, p) {
        ("normal", [mu, s]) => rand_distr::Normal::new(*mu, *s).map_err(msg)?.sample(rng),
        ("lognormal", [mu, s]) => rand_distr::LogNormal::new(*mu, *s).map_err(msg)?.sample(rng),
        ("exponential", [rate]) => rand_distr::Exp::new(*rate).map_err(msg)?.sample(rng),
        ("gamma", [a, b]) => rand_distr::Gamma::new(*a, 1.0 / b).map_err(msg)?.sample(rng),
        ("beta", [a, b]) => rand_distr::Beta::new(*a, *b).map_err(msg)?.sample(rng),
        ("uniform", [lo, hi]) => rng.random_range(*lo..*hi),
        ("bernoulli", [q]) => rng.random_bool(*q) as i64 as f64,
        ("poisson", [rate]) => rand_distr::Poisson::new(*rate).map_err(msg)?.sample(rng),
        ("binomial", [n, q]) => rand_distr::Binomial::new(*n as u64, *q).map_err(msg)?.sample(rng) as f64,
        _ => unreachable!("checked above"),
    })
}
