//! Runs every experiment suite at its acceptance setup and prints one line per criterion.

use std::collections::BTreeMap;
use std::process::ExitCode;

use roughheat::experiments::{self, Check};

const LIMITS: [(u8, &str, f64); 9] = [
    (1, "kernel algebra", 60.0),
    (2, "norm equivalence", 300.0),
    (3, "heat-semigroup decay", 60.0),
    (4, "renormalized products", 600.0),
    (5, "commutator uniformity", 600.0),
    (6, "linear assembly", 600.0),
    (7, "quasilinear contraction", 900.0),
    (8, "stability", 900.0),
    (9, "boundary correction", 600.0),
];

fn main() -> ExitCode {
    let mut checks: BTreeMap<u8, Vec<Check>> = BTreeMap::new();
    let mut times: BTreeMap<u8, f64> = BTreeMap::new();
    let mut errors = Vec::new();
    for name in experiments::NAMES {
        match experiments::run(name, serde_json::json!({}), None) {
            Ok(o) => {
                for c in o.checks {
                    checks.entry(c.criterion).or_default().push(c);
                }
                for (c, t) in o.timings {
                    *times.entry(c).or_default() += t;
                }
            }
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    let mut all = errors.is_empty();
    for (k, label, limit) in LIMITS {
        let cs = checks.get(&k).map(Vec::as_slice).unwrap_or(&[]);
        let t = times.get(&k).copied().unwrap_or(f64::NAN);
        let ok = !cs.is_empty() && cs.iter().all(|c| c.passed) && t < limit;
        all &= ok;
        println!("{} criterion {k} ({label}): {t:.1} s of {limit:.0} s", if ok { "PASS" } else { "FAIL" });
        for c in cs {
            println!("    {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
    }
    for e in &errors {
        println!("ERROR {e}");
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
