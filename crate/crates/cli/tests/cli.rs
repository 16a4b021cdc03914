//! Drives the built binary: outputs, files, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tatonnement")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const CYCLE: &str = "fisher 1\n1 2\n1\n0.5 0.5\n";

#[test]
fn gen_then_oracle_then_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = bin(d, &["gen", "--dist", "exponential", "--n", "4", "--m", "5", "--seed", "7", "-o", "m.txt"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(d.join("m.txt")).unwrap().starts_with("fisher 1\n4 5\n"));

    let out = bin(d, &["oracle", "--market", "m.txt", "-o", "eq.txt"]);
    assert_eq!(code(&out), 0);
    let eq = fs::read_to_string(d.join("eq.txt")).unwrap();
    assert!(eq.starts_with("p_star="));

    let out = bin(d, &["bounds", "--market", "m.txt", "--eta", "1e-7", "--pstar", "eq.txt", "--epsilon", "1e-3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for key in ["eta=", "stepsize_cap=", "grad_bound=", "alpha=", "e=", "recommended_eta=", "floor=", "price_upper="] {
        assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for name in ["a.txt", "b.txt"] {
        let out =
            bin(d, &["gen", "--dist", "integers", "--n", "3", "--m", "3", "--seed", "1", "--quasilinear", "-o", name]);
        assert_eq!(code(&out), 0);
    }
    let a = fs::read(d.join("a.txt")).unwrap();
    assert_eq!(a, fs::read(d.join("b.txt")).unwrap());
    assert!(String::from_utf8(a).unwrap().ends_with("utility quasilinear\n"));
}

#[test]
fn oracle_prints_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.txt"), CYCLE).unwrap();
    let out = bin(tmp.path(), &["oracle", "--market", "c.txt"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("p_star=5.0000000000000000e-1 5.0000000000000000e-1\n"));
}

#[test]
fn ingest_builds_an_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("r.csv"), "user_id,item_id,rating\n1,a,4\n1,b,1\n2,a,2\n2,b,2\n3,a,5\n").unwrap();
    let out =
        bin(d, &["ingest", "--ratings", "r.csv", "--min-entries", "2", "--fill", "fail", "--seed", "1", "-o", "m.txt"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(d.join("m.txt")).unwrap().starts_with("fisher 1\n2 2\n"));

    let out =
        bin(d, &["ingest", "--ratings", "r.csv", "--min-entries", "1", "--fill", "fail", "--seed", "1", "-o", "m.txt"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn run_and_compare_write_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.txt"), CYCLE).unwrap();
    fs::write(
        d.join("exp.cfg"),
        "market = c.txt\neta = 0.0078125\niterations = 200\ninit = 0.5 0.5078125\noutput_dir = out\nemit_plots = true\n",
    )
    .unwrap();
    let out = bin(d, &["run", "--config", "exp.cfg"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "theory.txt", "run_000.csv", "err_sq.svg", "equilibrium.txt"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let out = bin(d, &["compare", "--config", "exp.cfg"]);
    assert_eq!(code(&out), 0);
    assert!(d.join("out/comparison.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.txt"), CYCLE).unwrap();

    assert_eq!(code(&bin(d, &["--help"])), 0);
    assert_eq!(code(&bin(d, &["frobnicate"])), 1);
    assert_eq!(code(&bin(d, &["gen", "--dist", "gamma", "--n", "1", "--m", "1", "--seed", "1", "-o", "x"])), 1);
    assert_eq!(code(&bin(d, &["oracle", "--market", "missing.txt"])), 1);
    assert_eq!(code(&bin(d, &["bounds", "--market", "c.txt", "--eta", "1"])), 1);
    assert_eq!(code(&bin(d, &["run", "--config", "missing.cfg"])), 1);

    // One proportional-response step cannot certify convergence.
    fs::write(d.join("d.txt"), "fisher 1\n2 2\n0.3 0.7\n0.6 0.4\n0.2 0.8\n").unwrap();
    assert_eq!(code(&bin(d, &["oracle", "--market", "d.txt", "--max-iter", "1"])), 2);

    // A multiplicative step this large drives a price negative.
    fs::write(
        d.join("bad.cfg"),
        "market = c.txt\neta = 2\nvariant = multiplicative\niterations = 10\ninit = 0.5 0.5\noutput_dir = out\n",
    )
    .unwrap();
    assert_eq!(code(&bin(d, &["run", "--config", "bad.cfg"])), 2);

    fs::write(d.join("typo.cfg"), "market = c.txt\neta = 0.1\niterations = 10\noutput = out\n").unwrap();
    let out = bin(d, &["run", "--config", "typo.cfg"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `output`"));
}
