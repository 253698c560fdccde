//! Single-site random-walk Metropolis over the variables of a density.

use rand::Rng;
use rand_distr::StandardNormal;

use super::interp::{ExecError, Interp};
use super::value::Value;
use crate::frontend::{ElemType, Stmt};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhConfig {
    /// Standard deviation of the Gaussian proposal.
    pub step_size: f64,
    /// Sweeps discarded before the first draw.
    pub warmup: usize,
    /// Sweeps between consecutive draws of one chain.
    pub thin: usize,
    /// Sweeps after warmup for a draw from a fresh chain.
    pub inner_iters: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        MhConfig {
            step_size: 0.5,
            warmup: 500,
            thin: 1,
            inner_iters: 200,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(format!("step size must be positive, got {}", self.step_size));
        }
        if self.thin == 0 || self.inner_iters == 0 {
            return Err("thin and inner iterations must be at least 1".into());
        }
        Ok(())
    }
}

/// A sampled variable with its shape and support.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub len: Option<usize>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Param {
    /// Shape and bounds from the variable's declaration. Integer variables
    /// cannot be sampled.
    pub fn from_decl(interp: &mut Interp, name: &str) -> Result<Param, ExecError> {
        let decl = interp
            .decls
            .get(name)
            .ok_or_else(|| ExecError::Fault(format!("`{name}` is not declared")))?;
        if decl.elem_type() == ElemType::Int {
            return Err(format!("cannot sample integer variable `{name}` with Metropolis").into());
        }
        let len = interp.declared_len(name)?;
        let (lower, upper) = interp.bounds(name)?;
        Ok(Param {
            name: name.to_string(),
            len,
            lower,
            upper,
        })
    }

    fn size(&self) -> usize {
        self.len.unwrap_or(1)
    }

    fn inside(&self, x: f64) -> bool {
        self.lower.is_none_or(|l| x >= l) && self.upper.is_none_or(|u| x <= u)
    }
}

/// An unnormalized density over `params` given by the `target` contribution
/// of `stmts`, restricted to the declared bounds.
pub struct Target<'s> {
    pub stmts: &'s [Stmt],
    pub params: Vec<Param>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MhStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MhStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn add(&mut self, o: MhStats) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
    }
}

fn get(interp: &Interp, name: &str, k: usize) -> f64 {
    interp.env[name].at(k)
}

fn set(interp: &mut Interp, name: &str, k: usize, x: f64) {
    match interp.env.get_mut(name).unwrap() {
        Value::RealArray(v) => v[k] = x,
        slot => *slot = Value::Real(x),
    }
}

/// Log density at the current values; negative infinity outside the bounds.
pub fn log_density(interp: &mut Interp, t: &Target) -> Result<f64, ExecError> {
    for p in &t.params {
        let v = &interp.env[&p.name];
        if (0..p.size()).any(|k| !p.inside(v.at(k))) {
            return Ok(f64::NEG_INFINITY);
        }
    }
    interp.log_density(t.stmts)
}

/// Attempts at finding a starting point with finite density.
const INIT_TRIES: usize = 100;

/// Random starting values: uniform on (-2, 2), mapped into the support.
pub fn initialize(interp: &mut Interp, t: &Target) -> Result<f64, ExecError> {
    for _ in 0..INIT_TRIES {
        for p in &t.params {
            let rng = interp.streams.get(&p.name);
            let xs: Vec<f64> = (0..p.size())
                .map(|_| {
                    let u: f64 = rng.random_range(-2.0..2.0);
                    match (p.lower, p.upper) {
                        (None, None) => u,
                        (Some(l), None) => l + u.exp(),
                        (None, Some(h)) => h - u.exp(),
                        (Some(l), Some(h)) => l + (h - l) * (u + 2.0) / 4.0,
                    }
                })
                .collect();
            let v = match p.len {
                None => Value::Real(xs[0]),
                Some(_) => Value::RealArray(xs),
            };
            interp.env.insert(p.name.clone(), v);
        }
        let lp = log_density(interp, t)?;
        if lp.is_nan() {
            return Err("log density is NaN at the initial values".into());
        }
        if lp > f64::NEG_INFINITY {
            return Ok(lp);
        }
    }
    Err(format!("no initial value with finite density after {INIT_TRIES} attempts").into())
}

/// Update every coordinate once. `lp` is the log density at the current
/// values and is kept up to date.
pub fn sweep(interp: &mut Interp, t: &Target, step: f64, lp: &mut f64) -> Result<MhStats, ExecError> {
    let mut stats = MhStats::default();
    for p in &t.params {
        for k in 0..p.size() {
            let old = get(interp, &p.name, k);
            let rng = interp.streams.get(&p.name);
            let z: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            set(interp, &p.name, k, old + step * z);
            let new = log_density(interp, t)?;
            stats.proposed += 1;
            if new > f64::NEG_INFINITY && u.ln() < new - *lp {
                *lp = new;
                stats.accepted += 1;
            } else {
                set(interp, &p.name, k, old);
            }
        }
    }
    Ok(stats)
}

/// A fresh chain: initialize, then `warmup + inner_iters` sweeps. The final
/// state is left in the environment, with locals recomputed there.
pub fn fresh_draw(interp: &mut Interp, t: &Target, cfg: &MhConfig) -> Result<MhStats, ExecError> {
    let mut lp = initialize(interp, t)?;
    let mut stats = MhStats::default();
    for _ in 0..cfg.warmup + cfg.inner_iters {
        stats.add(sweep(interp, t, cfg.step_size, &mut lp)?);
    }
    log_density(interp, t)?;
    Ok(stats)
}

/// One chain: initialize, warm up, then call `each` after every `thin`
/// sweeps, `n` times.
pub fn chain(
    interp: &mut Interp,
    t: &Target,
    cfg: &MhConfig,
    n: usize,
    each: &mut dyn FnMut(&mut Interp) -> Result<(), ExecError>,
) -> Result<MhStats, ExecError> {
    let mut lp = initialize(interp, t)?;
    let mut stats = MhStats::default();
    for _ in 0..cfg.warmup {
        stats.add(sweep(interp, t, cfg.step_size, &mut lp)?);
    }
    for _ in 0..n {
        for _ in 0..cfg.thin {
            stats.add(sweep(interp, t, cfg.step_size, &mut lp)?);
        }
        log_density(interp, t)?;
        each(interp)?;
    }
    Ok(stats)
}
