//! Draw tables and their CSV form.
//!
//! A scalar variable `mu` is one column; element `k` of a sequence `theta`
//! is the column `theta.k`. Reals are written with 17 significant digits so
//! that a round trip through CSV is exact.

use std::collections::BTreeMap;
use std::io;

use super::interp::{Decls, Env};
use super::value::Value;
use crate::frontend::ElemType;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrawTable {
    pub columns: Vec<String>,
    /// Whether each column holds integers.
    pub ints: Vec<bool>,
    /// Row-major values.
    pub rows: Vec<Vec<f64>>,
}

/// Column names for variable `name` holding `v`.
pub fn column_names(name: &str, v: &Value) -> Vec<String> {
    match v.len() {
        None => vec![name.to_string()],
        Some(n) => (1..=n).map(|k| format!("{name}.{k}")).collect(),
    }
}

/// Split `theta.3` into (`theta`, Some(3)).
pub fn split_column(col: &str) -> (&str, Option<usize>) {
    match col.rsplit_once('.') {
        Some((base, k)) => match k.parse() {
            Ok(k) => (base, Some(k)),
            Err(_) => (col, None),
        },
        None => (col, None),
    }
}

impl DrawTable {
    /// Table with columns for `vars` shaped like `first`.
    pub fn for_values(vars: &[String], first: &[Value]) -> Self {
        let mut t = DrawTable::default();
        for (name, v) in vars.iter().zip(first) {
            for c in column_names(name, v) {
                t.columns.push(c);
                t.ints.push(v.is_int());
            }
        }
        t
    }

    pub fn push_values(&mut self, vals: &[Value]) {
        self.rows.push(vals.iter().flat_map(|v| v.to_reals()).collect());
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Base variable names in column order.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.columns {
            let base = split_column(c).0;
            if out.last().is_none_or(|l| l != base) {
                out.push(base.to_string());
            }
        }
        out
    }

    /// Indices of the columns that belong to variable `var`.
    pub fn var_columns(&self, var: &str) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| split_column(&self.columns[i]).0 == var)
            .collect()
    }

    /// Keep the listed variables, in the given order.
    pub fn select(&self, vars: &[String]) -> Result<DrawTable, String> {
        let mut idx = Vec::new();
        for v in vars {
            let cols = self.var_columns(v);
            if cols.is_empty() {
                return Err(format!("no column for `{v}`"));
            }
            idx.extend(cols);
        }
        Ok(DrawTable {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            ints: idx.iter().map(|&i| self.ints[i]).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    /// Columns of `self` followed by the columns of `other` not already present.
    pub fn join(&self, other: &DrawTable) -> Result<DrawTable, String> {
        if self.nrows() != other.nrows() && !self.columns.is_empty() {
            return Err(format!("row counts differ: {} and {}", self.nrows(), other.nrows()));
        }
        let extra: Vec<usize> = (0..other.columns.len())
            .filter(|&i| !self.columns.contains(&other.columns[i]))
            .collect();
        let mut t = self.clone();
        t.columns.extend(extra.iter().map(|&i| other.columns[i].clone()));
        t.ints.extend(extra.iter().map(|&i| other.ints[i]));
        if self.columns.is_empty() {
            t.rows = vec![Vec::new(); other.nrows()];
        }
        for (r, o) in t.rows.iter_mut().zip(&other.rows) {
            r.extend(extra.iter().map(|&i| o[i]));
        }
        Ok(t)
    }

    /// Row `r` as an environment. Sequence columns are regrouped; element
    /// types come from `decls` when declared, otherwise from the column.
    pub fn row_env(&self, r: usize, decls: &Decls) -> Env {
        let mut groups: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        let mut env = Env::new();
        for (i, c) in self.columns.iter().enumerate() {
            match split_column(c) {
                (base, Some(k)) => groups.entry(base).or_default().push((k, i)),
                (base, None) => {
                    let int = decls.get(base).map_or(self.ints[i], |d| d.elem_type() == ElemType::Int);
                    let x = self.rows[r][i];
                    env.insert(
                        base.to_string(),
                        if int { Value::Int(x as i64) } else { Value::Real(x) },
                    );
                }
            }
        }
        for (base, mut cols) in groups {
            cols.sort();
            let int = decls
                .get(base)
                .map_or(self.ints[cols[0].1], |d| d.elem_type() == ElemType::Int);
            let xs = cols.iter().map(|&(_, i)| self.rows[r][i]);
            env.insert(
                base.to_string(),
                if int {
                    Value::IntArray(xs.map(|x| x as i64).collect())
                } else {
                    Value::RealArray(xs.collect())
                },
            );
        }
        env
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().zip(&self.ints).map(|(x, &int)| format_value(*x, int)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    /// Parse a table; a column is integral when every entry parses as an
    /// integer.
    pub fn read_csv<R: io::Read>(r: R) -> Result<DrawTable, String> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let columns: Vec<String> = rd
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(String::from)
            .collect();
        let mut ints = vec![true; columns.len()];
        let mut rows = Vec::new();
        for (n, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != columns.len() {
                return Err(format!(
                    "row {}: expected {} fields, found {}",
                    n + 1,
                    columns.len(),
                    rec.len()
                ));
            }
            let mut row = Vec::with_capacity(columns.len());
            for (i, field) in rec.iter().enumerate() {
                if field.parse::<i64>().is_err() {
                    ints[i] = false;
                }
                row.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| format!("row {}, column `{}`: `{field}` is not a number", n + 1, columns[i]))?,
                );
            }
            rows.push(row);
        }
        Ok(DrawTable { columns, ints, rows })
    }
}

/// Read a one-row CSV environment file.
pub fn read_env<R: io::Read>(r: R, decls: &Decls) -> Result<Env, String> {
    let t = DrawTable::read_csv(r)?;
    match t.nrows() {
        1 => Ok(t.row_env(0, decls)),
        n => Err(format!("an environment file has exactly one row, found {n}")),
    }
}

fn format_value(x: f64, int: bool) -> String {
    if int {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}
