//! Runtime values: integer and real scalars and one-dimensional sequences.

use std::fmt;

use crate::frontend::{BinOp, UnOp};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    IntArray(Vec<i64>),
    RealArray(Vec<f64>),
}

impl Value {
    /// Sequence length, `None` for scalars.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> Option<usize> {
        match self {
            Value::Int(_) | Value::Real(_) => None,
            Value::IntArray(v) => Some(v.len()),
            Value::RealArray(v) => Some(v.len()),
        }
    }

    pub fn is_int(&self) -> bool {
        matches!(self, Value::Int(_) | Value::IntArray(_))
    }

    /// Element `k` as a real; scalars broadcast.
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Value::Int(i) => *i as f64,
            Value::Real(r) => *r,
            Value::IntArray(v) => v[k] as f64,
            Value::RealArray(v) => v[k],
        }
    }

    pub fn as_f64(&self) -> Result<f64, String> {
        match self {
            Value::Int(i) => Ok(*i as f64),
            Value::Real(r) => Ok(*r),
            _ => Err("expected a scalar, found a sequence".into()),
        }
    }

    pub fn as_int(&self) -> Result<i64, String> {
        match self {
            Value::Int(i) => Ok(*i),
            Value::Real(_) => Err("expected an integer, found a real".into()),
            _ => Err("expected an integer, found a sequence".into()),
        }
    }

    pub fn to_reals(&self) -> Vec<f64> {
        match self {
            Value::Int(i) => vec![*i as f64],
            Value::Real(r) => vec![*r],
            Value::IntArray(v) => v.iter().map(|&i| i as f64).collect(),
            Value::RealArray(v) => v.clone(),
        }
    }

    /// Sum of all elements.
    pub fn total(&self) -> f64 {
        match self {
            Value::Int(i) => *i as f64,
            Value::Real(r) => *r,
            Value::IntArray(v) => v.iter().map(|&i| i as f64).sum(),
            Value::RealArray(v) => v.iter().sum(),
        }
    }

    pub fn truthy(&self) -> Result<bool, String> {
        Ok(self.as_f64()? != 0.0)
    }

    /// Element `k` (0-based) of a sequence.
    pub fn index(&self, k: usize) -> Result<Value, String> {
        match self {
            Value::IntArray(v) => v.get(k).map(|&i| Value::Int(i)),
            Value::RealArray(v) => v.get(k).map(|&r| Value::Real(r)),
            _ => return Err("cannot index a scalar".into()),
        }
        .ok_or_else(|| format!("index {} out of range 1..{}", k + 1, self.len().unwrap()))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::IntArray(v) => write!(f, "{v:?}"),
            Value::RealArray(v) => write!(f, "{v:?}"),
        }
    }
}

/// Common length of the sequence operands, `None` if all are scalars.
pub fn broadcast_len(vals: &[&Value]) -> Result<Option<usize>, String> {
    let mut n = None;
    for v in vals {
        if let Some(m) = v.len() {
            match n {
                Some(k) if k != m => return Err(format!("sequence lengths differ: {k} and {m}")),
                _ => n = Some(m),
            }
        }
    }
    Ok(n)
}

fn int_op(op: BinOp, a: i64, b: i64) -> Result<Option<i64>, String> {
    let r = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div => {
            if b == 0 {
                return Err("integer division by zero".into());
            }
            a.checked_div(b)
        }
        BinOp::Lt => Some((a < b) as i64),
        BinOp::Le => Some((a <= b) as i64),
        BinOp::Gt => Some((a > b) as i64),
        BinOp::Ge => Some((a >= b) as i64),
        BinOp::Eq => Some((a == b) as i64),
        BinOp::Ne => Some((a != b) as i64),
        BinOp::And => Some((a != 0 && b != 0) as i64),
        BinOp::Or => Some((a != 0 || b != 0) as i64),
        BinOp::Pow => return Ok(None),
    };
    r.map(Some).ok_or_else(|| "integer overflow".into())
}

enum Num {
    I(i64),
    R(f64),
}

fn real_op(op: BinOp, a: f64, b: f64) -> Num {
    let flag = |c: bool| Num::I(c as i64);
    match op {
        BinOp::Add => Num::R(a + b),
        BinOp::Sub => Num::R(a - b),
        BinOp::Mul => Num::R(a * b),
        BinOp::Div => Num::R(a / b),
        BinOp::Pow => Num::R(a.powf(b)),
        BinOp::Lt => flag(a < b),
        BinOp::Le => flag(a <= b),
        BinOp::Gt => flag(a > b),
        BinOp::Ge => flag(a >= b),
        BinOp::Eq => flag(a == b),
        BinOp::Ne => flag(a != b),
        BinOp::And => flag(a != 0.0 && b != 0.0),
        BinOp::Or => flag(a != 0.0 || b != 0.0),
    }
}

fn scalar_op(op: BinOp, a: &Value, b: &Value) -> Result<Num, String> {
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        if let Some(r) = int_op(op, *x, *y)? {
            return Ok(Num::I(r));
        }
    }
    Ok(real_op(op, a.as_f64()?, b.as_f64()?))
}

fn elem(v: &Value, k: usize) -> Value {
    match v {
        Value::IntArray(x) => Value::Int(x[k]),
        Value::RealArray(x) => Value::Real(x[k]),
        s => s.clone(),
    }
}

/// Elementwise binary operation with scalar broadcasting. Integer operands
/// stay integral except under `^`; `/` on integers truncates.
pub fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, String> {
    match broadcast_len(&[a, b])? {
        None => Ok(match scalar_op(op, a, b)? {
            Num::I(i) => Value::Int(i),
            Num::R(r) => Value::Real(r),
        }),
        Some(n) => {
            let mut ints = Vec::new();
            let mut reals = Vec::new();
            for k in 0..n {
                match scalar_op(op, &elem(a, k), &elem(b, k))? {
                    Num::I(i) => ints.push(i),
                    Num::R(r) => reals.push(r),
                }
            }
            Ok(if reals.is_empty() {
                Value::IntArray(ints)
            } else {
                Value::RealArray(reals)
            })
        }
    }
}

pub fn unary(op: UnOp, a: &Value) -> Result<Value, String> {
    Ok(match (op, a) {
        (UnOp::Neg, Value::Int(i)) => Value::Int(i.checked_neg().ok_or("integer overflow")?),
        (UnOp::Neg, Value::Real(r)) => Value::Real(-r),
        (UnOp::Neg, Value::IntArray(v)) => Value::IntArray(v.iter().map(|i| -i).collect()),
        (UnOp::Neg, Value::RealArray(v)) => Value::RealArray(v.iter().map(|r| -r).collect()),
        (UnOp::Not, Value::Int(i)) => Value::Int((*i == 0) as i64),
        (UnOp::Not, Value::Real(r)) => Value::Int((*r == 0.0) as i64),
        (UnOp::Not, _) => return Err("`!` needs a scalar".into()),
    })
}

/// Apply a real function elementwise.
pub fn map_real(a: &Value, f: impl Fn(f64) -> f64) -> Value {
    match a {
        Value::Int(i) => Value::Real(f(*i as f64)),
        Value::Real(r) => Value::Real(f(*r)),
        Value::IntArray(v) => Value::RealArray(v.iter().map(|&i| f(i as f64)).collect()),
        Value::RealArray(v) => Value::RealArray(v.iter().map(|&r| f(r)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_arithmetic_stays_integral() {
        assert_eq!(binary(BinOp::Add, &Value::Int(2), &Value::Int(3)), Ok(Value::Int(5)));
        assert_eq!(binary(BinOp::Div, &Value::Int(7), &Value::Int(2)), Ok(Value::Int(3)));
        assert_eq!(binary(BinOp::Pow, &Value::Int(2), &Value::Int(3)), Ok(Value::Real(8.0)));
        assert_eq!(
            binary(BinOp::Add, &Value::Int(2), &Value::Real(0.5)),
            Ok(Value::Real(2.5))
        );
        assert!(binary(BinOp::Div, &Value::Int(1), &Value::Int(0)).is_err());
    }

    #[test]
    fn broadcasting() {
        let v = Value::RealArray(vec![1.0, 2.0]);
        assert_eq!(
            binary(BinOp::Mul, &v, &Value::Int(2)),
            Ok(Value::RealArray(vec![2.0, 4.0]))
        );
        assert_eq!(
            binary(BinOp::Lt, &v, &Value::RealArray(vec![1.5, 1.5])),
            Ok(Value::IntArray(vec![1, 0]))
        );
        assert!(binary(BinOp::Add, &v, &Value::RealArray(vec![1.0])).is_err());
    }

    #[test]
    fn indexing_is_checked() {
        let v = Value::IntArray(vec![4, 5]);
        assert_eq!(v.index(1), Ok(Value::Int(5)));
        assert!(v.index(2).is_err());
        assert!(Value::Real(1.0).index(0).is_err());
    }
}
