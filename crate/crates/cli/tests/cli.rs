//! End-to-end tests for the `horl` binary: subcommands, exit codes, and the
//! JSON round-trip invariant (printed rewrites re-parse to alpha-equal
//! values).

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use horl_core::hrs::load_hrs;
use horl_core::rewrite::check_rewrite;
use horl_core::syntax::parse_rewrite;
use horl_core::term::TypingContext;

const MU_HRS: &str = "\
sig mu : (o -> o) -> o.
sig f : o -> o.
sig g : o -> o.
sig c : o.
rule rho : mu (\\y. X y) => X (mu (\\y. X y)).
rule theta : f X => g X.
";

const LOOP_HRS: &str = "\
sig c : o.
sig d : o.
sig f : o -> o.
rule loop : c => c.
rule erase : f X => d.
";

fn fixture(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("horl-cli-tests");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn horl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horl"))
        .args(args)
        .output()
        .expect("run horl")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn check_validates_and_reports() {
    let path = fixture("mu.hrs", MU_HRS);
    let out = horl(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("2 rules"));

    let out = horl(&[
        "check",
        path.to_str().unwrap(),
        "-e",
        "rho (\\x. f x) ; f (mu (\\x. theta x)) ; theta (mu (\\x. g x))",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("type: o"));
    assert!(text.contains("tgt : g (mu"));
}

#[test]
fn invalid_input_exits_2() {
    let path = fixture("bad.hrs", "sig c : o.\nrule bad : X => c.\n");
    let out = horl(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let path = fixture("mu2.hrs", MU_HRS);
    let out = horl(&["check", path.to_str().unwrap(), "-e", "rho rho"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn equiv_exit_codes() {
    let path = fixture("mu3.hrs", MU_HRS);
    let out = horl(&[
        "equiv",
        path.to_str().unwrap(),
        "-e",
        "mu (\\x. theta x) ; rho (\\x. g x)",
        "-e",
        "rho (\\x. f x) ; f (mu (\\x. theta x)) ; theta (mu (\\x. g x))",
        "--method",
        "both",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let out = horl(&[
        "equiv",
        path.to_str().unwrap(),
        "-e",
        "mu (\\x. theta x)",
        "-e",
        "rho (\\x. f x)",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("inequivalent"));
}

#[test]
fn flatten_matches_known_example() {
    let path = fixture("cd.hrs", "sig c : o.\nsig d : o.\nrule rho : c => d.\n");
    let out = horl(&[
        "flatten",
        path.to_str().unwrap(),
        "-e",
        "(\\x. (x ; x)) rho",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "c ; rho");
}

#[test]
fn json_output_roundtrips() {
    let path = fixture("mu4.hrs", MU_HRS);
    let out = horl(&[
        "--json",
        "flatten",
        path.to_str().unwrap(),
        "-e",
        "mu (\\x. theta x) ; rho (\\x. g x)",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    // every printed rewrite re-parses to an alpha-equal, checkable value
    let hrs = load_hrs(MU_HRS).unwrap();
    let expected = ["mu theta", "rho g"];
    for (s, e) in steps.iter().zip(expected) {
        let printed = s.as_str().unwrap();
        let reparsed = parse_rewrite(printed, &hrs).unwrap();
        assert!(check_rewrite(&TypingContext::new(), &reparsed, &hrs).is_ok());
        assert_eq!(reparsed, parse_rewrite(e, &hrs).unwrap());
        // printing again is stable
        assert_eq!(
            horl_core::rewrite::print_rewrite_annotated(&reparsed),
            printed
        );
    }
}

#[test]
fn standardize_trace_and_budget() {
    let dfg = "\
sig d : (o -> o) -> o -> o.
sig f : o -> o.
sig g : o -> o.
rule varrho : d (\\z. X z) Y => X (X Y).
rule vartheta : f (f X) => g X.
";
    let path = fixture("dfg.hrs", dfg);
    let out = horl(&[
        "standardize",
        path.to_str().unwrap(),
        "-e",
        "d (varrho f) ; d vartheta ; varrho g",
        "--trace",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("Pull"));
    assert!(text.contains("Del"));
    assert!(text.contains("varrho (varrho f)"));

    // a too-small budget exits 3
    let path = fixture("loop.hrs", LOOP_HRS);
    let out = horl(&[
        "standardize",
        path.to_str().unwrap(),
        "-e",
        "f loop ; f loop ; erase c",
        "--budget",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reduce_enumerates_and_steps() {
    let path = fixture("mu5.hrs", MU_HRS);
    let out = horl(&[
        "reduce",
        path.to_str().unwrap(),
        "-t",
        "mu (\\x. f x)",
        "--steps",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("->"));
    assert!(text.contains("redex:"));
    // a normal form reports none
    let out = horl(&["reduce", path.to_str().unwrap(), "-t", "g c"]);
    assert!(stdout(&out).contains("normal form"));
}

#[test]
fn project_prints_residual() {
    let path = fixture("mu6.hrs", MU_HRS);
    let out = horl(&[
        "project",
        path.to_str().unwrap(),
        "-e",
        "mu (\\x. theta x)",
        "-e",
        "rho (\\x. f x)",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "theta (mu theta)");
}
