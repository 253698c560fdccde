//! Builtin distribution and math function tables.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistInfo {
    pub name: &'static str,
    pub params: &'static [&'static str],
    /// Variate is integer valued (`_lpmf` family).
    pub discrete: bool,
}

pub const DISTRIBUTIONS: &[DistInfo] = &[
    DistInfo {
        name: "normal",
        params: &["mu", "sigma"],
        discrete: false,
    },
    DistInfo {
        name: "lognormal",
        params: &["mu", "sigma"],
        discrete: false,
    },
    DistInfo {
        name: "exponential",
        params: &["rate"],
        discrete: false,
    },
    DistInfo {
        name: "gamma",
        params: &["shape", "rate"],
        discrete: false,
    },
    DistInfo {
        name: "beta",
        params: &["a", "b"],
        discrete: false,
    },
    DistInfo {
        name: "uniform",
        params: &["lo", "hi"],
        discrete: false,
    },
    DistInfo {
        name: "bernoulli",
        params: &["p"],
        discrete: true,
    },
    DistInfo {
        name: "poisson",
        params: &["rate"],
        discrete: true,
    },
    DistInfo {
        name: "binomial",
        params: &["n", "p"],
        discrete: true,
    },
];

pub fn distribution(name: &str) -> Option<&'static DistInfo> {
    DISTRIBUTIONS.iter().find(|d| d.name == name)
}

/// Suffix of a distribution-family call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistFn {
    /// `_lpdf` or `_lpmf`
    Density,
    Rng,
    Cdf,
}

/// Split `normal_lpdf` into (`normal`, Density). Continuous distributions
/// take `_lpdf`, discrete ones `_lpmf`.
pub fn split_dist_call(name: &str) -> Option<(&'static DistInfo, DistFn)> {
    let (base, suffix) = name.rsplit_once('_')?;
    let info = distribution(base)?;
    let kind = match suffix {
        "lpdf" if !info.discrete => DistFn::Density,
        "lpmf" if info.discrete => DistFn::Density,
        "rng" => DistFn::Rng,
        "cdf" => DistFn::Cdf,
        _ => return None,
    };
    Some((info, kind))
}

/// Math builtins and their arity.
pub const MATH_FUNCTIONS: &[(&str, usize)] = &[
    ("log", 1),
    ("exp", 1),
    ("sqrt", 1),
    ("pow", 2),
    ("pi", 0),
    ("abs", 1),
    ("square", 1),
    ("cos", 1),
    ("sin", 1),
    ("sum", 1),
];

pub fn math_arity(name: &str) -> Option<usize> {
    MATH_FUNCTIONS.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
}

/// Expected argument count of any builtin call, variate included.
pub fn call_arity(name: &str) -> Option<usize> {
    if let Some(a) = math_arity(name) {
        return Some(a);
    }
    let (info, kind) = split_dist_call(name)?;
    Some(match kind {
        DistFn::Rng => info.params.len(),
        DistFn::Density | DistFn::Cdf => info.params.len() + 1,
    })
}

/// Calls printed with `|` after the first argument.
pub fn uses_bar(name: &str) -> bool {
    matches!(split_dist_call(name), Some((_, DistFn::Density | DistFn::Cdf)))
}

pub fn is_rng(name: &str) -> bool {
    matches!(split_dist_call(name), Some((_, DistFn::Rng)))
}

pub fn is_density_call(name: &str) -> bool {
    matches!(split_dist_call(name), Some((_, DistFn::Density)))
}
