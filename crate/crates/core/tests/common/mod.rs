//! Helpers shared by the integration tests.

use fwdppl::fixtures;
use fwdppl::frontend::{BlockKind, ElemType};
use fwdppl::pipeline::Analysis;
use fwdppl::runtime::{program_decls, read_env, Env, Interp, Streams, Value};
use rand::Rng;

/// Integer data from the fixture's CSV; every real data variable and
/// parameter drawn uniformly within its bounds.
pub fn random_env(name: &str, a: &Analysis, rng: &mut impl Rng) -> Env {
    let decls = program_decls(&a.program);
    let ints: Env = fixtures::data(name)
        .map(|csv| read_env(csv.as_bytes(), &decls).unwrap())
        .unwrap_or_default()
        .into_iter()
        .filter(|(_, v)| v.is_int())
        .collect();
    let mut interp = Interp::new(decls.clone(), ints, Streams::new(0, 0));
    let names = a
        .program
        .declared_in(BlockKind::Data)
        .into_iter()
        .chain(a.program.declared_in(BlockKind::Parameters));
    for v in names {
        if interp.env.contains_key(&v) || decls[&v].elem_type() == ElemType::Int {
            continue;
        }
        let len = interp.declared_len(&v).unwrap();
        let (lo, hi) = interp.bounds(&v).unwrap();
        let mut one = || match (lo, hi) {
            (None, None) => rng.random_range(-3.0..3.0),
            (Some(l), None) => l + rng.random_range(-2.0f64..1.5).exp(),
            (None, Some(h)) => h - rng.random_range(-2.0f64..1.5).exp(),
            (Some(l), Some(h)) => rng.random_range(l..h),
        };
        let value = match len {
            None => Value::Real(one()),
            Some(n) => Value::RealArray((0..n).map(|_| one()).collect()),
        };
        interp.env.insert(v, value);
    }
    interp.env
}
