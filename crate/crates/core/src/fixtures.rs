//! Example programs used throughout the tests, the guide and the CLI.

/// Eight schools with an unnormalized prior on `mu` and a normal prior on `tau`.
pub const EIGHT_SCHOOLS: &str = include_str!("../fixtures/eight_schools.ppl");
/// Four parameters where two factors jointly form an inverse Gaussian on `e`.
pub const QUERY: &str = include_str!("../fixtures/query.ppl");
/// `f1(x)`, `f2(y)`, `f3(x, y)`: two valid sampling orders.
pub const TWO_ORDERS: &str = include_str!("../fixtures/two_orders.ppl");
/// `f1(x, y)`, `f2(x, z)`, `f3(y, z)`: no forward-sampling order exists.
pub const TRIANGLE: &str = include_str!("../fixtures/triangle.ppl");
/// Two angles coupled by a von Mises kernel; both orders are constant-normalized.
pub const CIRCULAR: &str = include_str!("../fixtures/circular.ppl");
pub const INTERMEDIATE: &str = include_str!("../fixtures/intermediate.ppl");
pub const NORMAL_NORMAL: &str = include_str!("../fixtures/normal_normal.ppl");
pub const CHAIN: &str = include_str!("../fixtures/chain.ppl");
pub const HALF_NORMAL: &str = include_str!("../fixtures/half_normal.ppl");
pub const LOOPED: &str = include_str!("../fixtures/looped.ppl");
pub const EMPTY_MODEL: &str = include_str!("../fixtures/empty_model.ppl");

/// Every fixture with its file stem.
pub const ALL: &[(&str, &str)] = &[
    ("eight_schools", EIGHT_SCHOOLS),
    ("query", QUERY),
    ("two_orders", TWO_ORDERS),
    ("triangle", TRIANGLE),
    ("circular", CIRCULAR),
    ("intermediate", INTERMEDIATE),
    ("normal_normal", NORMAL_NORMAL),
    ("chain", CHAIN),
    ("half_normal", HALF_NORMAL),
    ("looped", LOOPED),
    ("empty_model", EMPTY_MODEL),
];

/// Data for the fixtures that declare data, as one-row CSV.
pub fn data(name: &str) -> Option<&'static str> {
    Some(match name {
        "eight_schools" => include_str!("../fixtures/eight_schools.data.csv"),
        "normal_normal" => include_str!("../fixtures/normal_normal.data.csv"),
        "chain" => include_str!("../fixtures/chain.data.csv"),
        "intermediate" => include_str!("../fixtures/intermediate.data.csv"),
        "looped" => include_str!("../fixtures/looped.data.csv"),
        _ => return None,
    })
}
