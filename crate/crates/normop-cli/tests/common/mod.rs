//! Shared fixture manifest and runner for the golden-file suite.
//!
//! Each fixture is a directory under `tests/fixtures/` holding the input
//! files, the command-line arguments to run from inside that directory, and
//! the expected stdout bytes in `expected.json`. Exit codes are part of the
//! contract and live in the manifest. Stderr is not pinned.

use std::path::PathBuf;
use std::process::{Command, Output};

pub struct Fixture {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub exit: i32,
}

/// Every golden fixture, one per contract point: at least one per
/// subcommand, plus one per exit-code family.
pub const FIXTURES: &[Fixture] = &[
    Fixture {
        name: "decompose-diag",
        args: &["decompose", "matrix.json"],
        exit: 0,
    },
    Fixture {
        name: "decompose-rotation",
        args: &["decompose", "matrix.json"],
        exit: 0,
    },
    Fixture {
        name: "decompose-not-normal",
        args: &["decompose", "matrix.json"],
        exit: 1,
    },
    Fixture {
        name: "equiv-equal",
        args: &["equiv", "a.json", "b.json"],
        exit: 0,
    },
    Fixture {
        name: "equiv-mult-mismatch",
        args: &["equiv", "a.json", "b.json"],
        exit: 1,
    },
    Fixture {
        name: "align-exact",
        args: &["align", "a.json", "b.json"],
        exit: 0,
    },
    Fixture {
        name: "align-jitter",
        args: &["align", "a.json", "b.json"],
        exit: 0,
    },
    Fixture {
        name: "align-none",
        args: &["align", "a.json", "b.json"],
        exit: 1,
    },
    Fixture {
        name: "axioms-pass",
        args: &["axioms", "model.json", "theory.json"],
        exit: 0,
    },
    Fixture {
        name: "axioms-outside-atom",
        args: &["axioms", "model.json", "theory.json"],
        exit: 1,
    },
    Fixture {
        name: "limit-merge",
        args: &[
            "limit", "m1.json", "m2.json", "m3.json", "m4.json", "m5.json", "m6.json", "m7.json",
            "m8.json", "--schedule", "1.0,0.5,0.25",
        ],
        exit: 0,
    },
    Fixture {
        name: "type-dist-sqrt2",
        args: &["type-dist", "p.json", "q.json"],
        exit: 0,
    },
    Fixture {
        name: "indep-independent",
        args: &["indep", "model.json", "a.json", "b.json", "c.json"],
        exit: 0,
    },
    Fixture {
        name: "indep-dependent",
        args: &["indep", "model.json", "a.json", "b.json", "c.json"],
        exit: 1,
    },
    Fixture {
        name: "calc-square",
        args: &["calc", "model.json", "--map", "square"],
        exit: 0,
    },
    Fixture {
        name: "calc-bump",
        args: &[
            "calc",
            "model.json",
            "--map",
            "bump",
            "--regions",
            "regions.json",
            "--eps",
            "0.5",
        ],
        exit: 0,
    },
    Fixture {
        name: "calc-bump-overlap",
        args: &[
            "calc",
            "model.json",
            "--map",
            "bump",
            "--regions",
            "regions.json",
            "--eps",
            "0.5",
        ],
        exit: 1,
    },
    Fixture {
        name: "calc-mobius-pole",
        args: &[
            "calc",
            "model.json",
            "--map",
            "mobius",
            "--params",
            "1,0,0,0,1,0,-2,0",
        ],
        exit: 2,
    },
    Fixture {
        name: "pert-shift",
        args: &["pert", "p.json", "q.json", "model.json"],
        exit: 0,
    },
    Fixture {
        name: "net-grid",
        args: &["net", "model.json", "--eps", "0.1"],
        exit: 0,
    },
    Fixture {
        name: "malformed-json",
        args: &["equiv", "bad.json", "bad.json"],
        exit: 2,
    },
];

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Runs the built binary from inside the fixture directory.
pub fn run_fixture(fx: &Fixture) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normop"))
        .args(fx.args)
        .current_dir(fixture_dir(fx.name))
        .output()
        .unwrap_or_else(|e| panic!("failed to launch binary for {}: {e}", fx.name))
}

pub fn expected_path(fx: &Fixture) -> PathBuf {
    fixture_dir(fx.name).join("expected.json")
}
