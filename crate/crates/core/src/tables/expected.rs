// Expected (alpha, omega) labels per table case. Frozen; the table runner
// compares against these.
use crate::limits::LimitLabel::{self, *};

pub const EXPECTED: &[(&str, LimitLabel, LimitLabel)] = &[
    ("1", NowhereDenseSing, NowhereDenseSing),
    ("1'", NowhereDenseSing, NowhereDenseSing),
    ("2", NowhereDenseSing, LimitCycle),
    ("3", LimitCycle, LimitCycle),
    ("3'", LimitQuasiCircuit, LimitQuasiCircuit),
    ("4", NowhereDenseSing, LocallyDenseQSet),
    ("5", NowhereDenseSing, TransverselyCantorQSet),
    ("7", LocallyDenseQSet, LocallyDenseQSet),
    ("9", QuasiQSetInSingP, QuasiQSetInSingP),
];
