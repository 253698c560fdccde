//! Statement execution and expression evaluation.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dist;
use super::value::{binary, broadcast_len, map_real, unary, Value};
use crate::frontend::builtins::{self, DistFn};
use crate::frontend::{Decl, ElemType, Expr, Stmt, StmtKind};

pub type Env = HashMap<String, Value>;

/// Declarations visible to the interpreter, by name.
pub type Decls = HashMap<String, Decl>;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The generator for variable `name` in row `row` of a run seeded with
/// `seed`. Each (seed, row, name) triple gets an independent ChaCha8 stream,
/// so results do not depend on the order in which rows or variables are
/// processed.
pub fn substream(seed: u64, row: u64, name: &str) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(row ^ splitmix64(fnv1a(name))));
    ChaCha8Rng::seed_from_u64(key)
}

/// Lazily created per-variable generators for one row.
#[derive(Clone, Debug)]
pub struct Streams {
    seed: u64,
    row: u64,
    map: HashMap<String, ChaCha8Rng>,
}

impl Streams {
    pub fn new(seed: u64, row: u64) -> Self {
        Streams {
            seed,
            row,
            map: HashMap::new(),
        }
    }

    pub fn get(&mut self, name: &str) -> &mut ChaCha8Rng {
        if !self.map.contains_key(name) {
            self.map.insert(name.to_string(), substream(self.seed, self.row, name));
        }
        self.map.get_mut(name).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExecError {
    /// A `reject` statement ran.
    #[error("rejected: {0}")]
    Reject(String),
    #[error("{0}")]
    Fault(String),
}

impl From<String> for ExecError {
    fn from(s: String) -> Self {
        ExecError::Fault(s)
    }
}

impl From<&str> for ExecError {
    fn from(s: &str) -> Self {
        ExecError::Fault(s.to_string())
    }
}

/// Attempts per element when drawing inside declared bounds.
const MAX_TRUNCATION_TRIES: usize = 10_000;

pub struct Interp {
    pub env: Env,
    /// The `target` accumulator.
    pub target: f64,
    pub decls: Decls,
    pub streams: Streams,
    /// Variable whose stream feeds `_rng` calls in the current assignment.
    drawing: Option<String>,
}

impl Interp {
    pub fn new(decls: Decls, env: Env, streams: Streams) -> Self {
        Interp {
            env,
            target: 0.0,
            decls,
            streams,
            drawing: None,
        }
    }

    fn decl(&self, name: &str) -> Result<&Decl, ExecError> {
        self.decls
            .get(name)
            .ok_or_else(|| ExecError::Fault(format!("`{name}` is not declared")))
    }

    /// Declared length of a sequence variable.
    pub fn declared_len(&mut self, name: &str) -> Result<Option<usize>, ExecError> {
        let Some(e) = self.decl(name)?.length().cloned() else {
            return Ok(None);
        };
        let n = self.eval(&e)?.as_int()?;
        usize::try_from(n)
            .map(Some)
            .map_err(|_| ExecError::Fault(format!("negative length {n} for `{name}`")))
    }

    /// Evaluated declared bounds.
    pub fn bounds(&mut self, name: &str) -> Result<(Option<f64>, Option<f64>), ExecError> {
        let b = self.decl(name)?.bounds.clone();
        let lo = b
            .lower
            .as_ref()
            .map(|e| self.eval(e).and_then(|v| Ok(v.as_f64()?)))
            .transpose()?;
        let hi = b
            .upper
            .as_ref()
            .map(|e| self.eval(e).and_then(|v| Ok(v.as_f64()?)))
            .transpose()?;
        Ok((lo, hi))
    }

    fn allocate(&mut self, name: &str) -> Result<(), ExecError> {
        let int = self.decl(name)?.elem_type() == ElemType::Int;
        let v = match (self.declared_len(name)?, int) {
            (None, true) => Value::Int(0),
            (None, false) => Value::Real(f64::NAN),
            (Some(n), true) => Value::IntArray(vec![0; n]),
            (Some(n), false) => Value::RealArray(vec![f64::NAN; n]),
        };
        self.env.insert(name.to_string(), v);
        Ok(())
    }

    /// Convert `v` to the declared type and shape of `name`.
    fn coerce(&mut self, name: &str, v: Value) -> Result<Value, ExecError> {
        let int = self.decl(name)?.elem_type() == ElemType::Int;
        let len = self.declared_len(name)?;
        if int && !v.is_int() {
            return Err(format!("cannot assign a real value to integer `{name}`").into());
        }
        if len != v.len() {
            let shape = |l: Option<usize>| l.map_or("a scalar".to_string(), |n| format!("length {n}"));
            return Err(format!("`{name}` has {} but the value has {}", shape(len), shape(v.len())).into());
        }
        Ok(match v {
            Value::Int(i) if !int => Value::Real(i as f64),
            Value::IntArray(a) if !int => Value::RealArray(a.into_iter().map(|i| i as f64).collect()),
            v => v,
        })
    }

    pub fn exec(&mut self, stmts: &[Stmt]) -> Result<(), ExecError> {
        stmts.iter().try_for_each(|s| self.exec_stmt(s))
    }

    pub fn exec_stmt(&mut self, s: &Stmt) -> Result<(), ExecError> {
        match &s.kind {
            StmtKind::Decl(d) => {
                if !self.env.contains_key(&d.name) {
                    self.decls.entry(d.name.clone()).or_insert_with(|| d.clone());
                    self.allocate(&d.name)?;
                }
                Ok(())
            }
            StmtKind::Assign { target, value } => {
                self.drawing = Some(target.name.clone());
                let r = self.assign(&target.name, target.index.as_ref(), value);
                self.drawing = None;
                r
            }
            StmtKind::TargetIncrement(e) => {
                self.target += self.eval(e)?.total();
                Ok(())
            }
            StmtKind::Tilde { .. } => {
                let e = s.desugared_tilde().unwrap();
                self.target += self.eval(&e)?.total();
                Ok(())
            }
            StmtKind::For { var, lo, hi, body } => {
                let lo = self.eval(lo)?.as_int()?;
                let hi = self.eval(hi)?.as_int()?;
                let mut r = Ok(());
                for i in lo..=hi {
                    self.env.insert(var.clone(), Value::Int(i));
                    r = self.exec(body);
                    if r.is_err() {
                        break;
                    }
                }
                self.env.remove(var);
                r
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.eval(cond)?.truthy()? {
                    self.exec(then_branch)
                } else if let Some(b) = else_branch {
                    self.exec(b)
                } else {
                    Ok(())
                }
            }
            StmtKind::Reject(msg) => Err(ExecError::Reject(msg.clone())),
        }
    }

    fn assign(&mut self, name: &str, index: Option<&Expr>, value: &Expr) -> Result<(), ExecError> {
        let Some(index) = index else {
            let v = match value {
                Expr::Call(f, args) if builtins::is_rng(f) => {
                    let len = self.declared_len(name)?;
                    let bounds = self.bounds(name)?;
                    self.draw(f, args, len, bounds)?
                }
                e => self.eval(e)?,
            };
            let v = self.coerce(name, v)?;
            self.env.insert(name.to_string(), v);
            return Ok(());
        };
        let k = self.eval(index)?.as_int()?;
        let v = self.eval(value)?;
        if !self.env.contains_key(name) {
            self.allocate(name)?;
        }
        let int = self.decl(name)?.elem_type() == ElemType::Int;
        let slot = self.env.get_mut(name).unwrap();
        let n = slot
            .len()
            .ok_or_else(|| ExecError::Fault(format!("cannot index scalar `{name}`")))?;
        if k < 1 || k as usize > n {
            return Err(format!("index {k} out of range 1..{n} for `{name}`").into());
        }
        let k = k as usize - 1;
        match (slot, v) {
            (Value::IntArray(a), Value::Int(i)) => a[k] = i,
            (Value::RealArray(a), Value::Int(i)) => a[k] = i as f64,
            (Value::RealArray(a), Value::Real(r)) => a[k] = r,
            (_, v) if int && !v.is_int() => {
                return Err(format!("cannot assign a real value to integer `{name}`").into())
            }
            _ => return Err(format!("element of `{name}` must be a scalar").into()),
        }
        Ok(())
    }

    /// Draw from `f(args)`. Scalar arguments with a sequence target draw one
    /// value per element; values outside `bounds` are redrawn.
    fn draw(
        &mut self,
        f: &str,
        args: &[Expr],
        len: Option<usize>,
        bounds: (Option<f64>, Option<f64>),
    ) -> Result<Value, ExecError> {
        let (info, _) = builtins::split_dist_call(f).unwrap();
        let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
        let n = match broadcast_len(&vals.iter().collect::<Vec<_>>())? {
            Some(n) => Some(n),
            None => len,
        };
        let stream = self
            .drawing
            .clone()
            .ok_or_else(|| ExecError::Fault(format!("`{f}` used outside an assignment")))?;
        let rng = self.streams.get(&stream);
        let mut out = Vec::with_capacity(n.unwrap_or(1));
        let mut params = vec![0.0; vals.len()];
        for k in 0..n.unwrap_or(1) {
            for (p, v) in params.iter_mut().zip(&vals) {
                *p = v.at(k);
            }
            let mut tries = 0;
            let x = loop {
                let x = dist::draw(info.name, &params, rng)?;
                if bounds.0.is_none_or(|lo| x >= lo) && bounds.1.is_none_or(|hi| x <= hi) {
                    break x;
                }
                tries += 1;
                if tries == MAX_TRUNCATION_TRIES {
                    return Err(format!(
                        "`{f}` produced no value inside the bounds of `{stream}` in {MAX_TRUNCATION_TRIES} tries"
                    )
                    .into());
                }
            };
            out.push(x);
        }
        Ok(match (n, info.discrete) {
            (None, true) => Value::Int(out[0] as i64),
            (None, false) => Value::Real(out[0]),
            (Some(_), true) => Value::IntArray(out.into_iter().map(|x| x as i64).collect()),
            (Some(_), false) => Value::RealArray(out),
        })
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Value, ExecError> {
        match e {
            Expr::Int(i) => Ok(Value::Int(*i)),
            Expr::Real(r) => Ok(Value::Real(*r)),
            Expr::Var(v) => self
                .env
                .get(v)
                .cloned()
                .ok_or_else(|| ExecError::Fault(format!("`{v}` is not bound"))),
            Expr::Index(v, i) => {
                let k = self.eval(i)?.as_int()?;
                let seq = self
                    .env
                    .get(v)
                    .ok_or_else(|| ExecError::Fault(format!("`{v}` is not bound")))?;
                if k < 1 {
                    return Err(format!("index {k} out of range for `{v}`").into());
                }
                Ok(seq.index(k as usize - 1).map_err(|m| format!("`{v}`: {m}"))?)
            }
            Expr::Unary(op, a) => Ok(unary(*op, &self.eval(a)?)?),
            Expr::Binary(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                Ok(binary(*op, &a, &b)?)
            }
            Expr::Call(f, args) => self.call(f, args),
        }
    }

    fn call(&mut self, f: &str, args: &[Expr]) -> Result<Value, ExecError> {
        if let Some((info, kind)) = builtins::split_dist_call(f) {
            return match kind {
                DistFn::Rng => self.draw(f, args, None, (None, None)),
                DistFn::Density | DistFn::Cdf => {
                    let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                    let n = broadcast_len(&vals.iter().collect::<Vec<_>>())?.unwrap_or(1);
                    let (x, ps) = vals.split_first().unwrap();
                    let mut params = vec![0.0; ps.len()];
                    let mut acc = if kind == DistFn::Density { 0.0 } else { 1.0 };
                    for k in 0..n {
                        for (p, v) in params.iter_mut().zip(ps) {
                            *p = v.at(k);
                        }
                        if kind == DistFn::Density {
                            acc += dist::lpdf(info.name, x.at(k), &params);
                        } else {
                            acc *= dist::cdf(info.name, x.at(k), &params)?;
                        }
                    }
                    Ok(Value::Real(acc))
                }
            };
        }
        let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
        Ok(match (f, vals.as_slice()) {
            ("log", [a]) => map_real(a, f64::ln),
            ("exp", [a]) => map_real(a, f64::exp),
            ("sqrt", [a]) => map_real(a, f64::sqrt),
            ("cos", [a]) => map_real(a, f64::cos),
            ("sin", [a]) => map_real(a, f64::sin),
            ("abs", [Value::Int(i)]) => Value::Int(i.abs()),
            ("abs", [a]) => map_real(a, f64::abs),
            ("square", [a]) => binary(crate::frontend::BinOp::Mul, a, a)?,
            ("pow", [a, b]) => binary(crate::frontend::BinOp::Pow, a, b)?,
            ("pi", []) => Value::Real(std::f64::consts::PI),
            ("sum", [Value::IntArray(v)]) => Value::Int(v.iter().sum()),
            ("sum", [a]) => Value::Real(a.total()),
            _ => return Err(format!("unknown function `{f}` with {} argument(s)", vals.len()).into()),
        })
    }

    /// Total `target` contribution of `stmts`; a `reject` gives negative
    /// infinity.
    pub fn log_density(&mut self, stmts: &[Stmt]) -> Result<f64, ExecError> {
        self.target = 0.0;
        match self.exec(stmts) {
            Ok(()) => Ok(self.target),
            Err(ExecError::Reject(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}
