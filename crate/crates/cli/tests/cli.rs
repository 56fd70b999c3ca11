use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subdiff-lab"))
        .args(args)
        .env("SUBDIFF_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

const ABS: &str = "max(1*x,-1*x)";

#[test]
fn certified_minimum_exits_zero() {
    let o = run(&["checkmin-sub", "--func", ABS, "--at", "0", "--region", "box(-1,1)"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["verdict"], "OptimalCertified");
    let o = run(&["checkmin-dd", "--func", ABS, "--at", "0", "--region", "box(-1,1)"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn refutation_exits_one_with_witness() {
    let o = run(&["refute", "--func", ABS, "--at", "0.5", "--region", "box(-1,1)"]);
    assert_eq!(code(&o), 1);
    let w = json(&o);
    assert_eq!(w["valid"], true);
    assert!(w["inner"].as_f64().unwrap() > 0.0);
    assert!(w["f_yeps"].as_f64().unwrap() < 0.5);
}

#[test]
fn refute_at_minimizer_exits_zero() {
    let o = run(&["refute", "--func", ABS, "--at", "0", "--region", "box(-1,1)"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["optimal"], true);
}

#[test]
fn non_minimizer_exits_one() {
    let o = run(&["checkmin-dd", "--func", ABS, "--at", "0.5", "--region", "box(-1,1)"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["verdict"], "NotOptimal");
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&run(&["bogus"])), 3);
    assert_eq!(code(&run(&["eval", "--at", "0"])), 3);
    assert_eq!(code(&run(&["eval", "--func", ABS])), 3);
    assert_eq!(code(&run(&["eval", "--func", "x * y", "--at", "0"])), 3);
    assert_eq!(code(&run(&["eval", "--func", ABS, "--at", "0,1"])), 3);
    assert_eq!(code(&run(&["dd", "--func", ABS, "--at", "0", "--dir", "one"])), 3);
    assert_eq!(code(&run(&["subdiff", "--func", "max(x, -x) on box(-1,1)", "--at", "1"])), 3);
    assert_eq!(code(&run(&["eval", "--func", "@/nonexistent/file.plf", "--at", "0"])), 3);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn pointwise_commands() {
    let o = run(&["eval", "--func", "max(x, -x) on box(0,1)", "--at", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["value"], "+inf");

    let o = run(&["dd", "--func", "3*x + 2", "--at", "0.7", "--dir", "-2"]);
    assert_eq!(json(&o)["derivative"], -6.0);

    let o = run(&["subdiff", "--func", "max(x1, x2)", "--at", "0,0", "--format", "csv"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "xstar1,xstar2\n0,1\n1,0\n");

    let o = run(&["enlarge", "--func", "max(x, -x)", "--at", "0.5", "--eps", "0.1", "--grid-h", "0.01"]);
    let v = json(&o);
    assert!(v["count"].as_u64().unwrap() > 0);
    assert!(v["samples"].as_array().unwrap().iter().all(|s| s["xstar"][0] == 1.0));
}

#[test]
fn variational_commands() {
    let o = run(&["link", "--func", "max(x, -x)", "--at", "0", "--dir", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["pass"], true);

    let o = run(&["ekeland", "--func", "max(x, -x)", "--at", "0.2", "--eps", "0.5", "--lambda", "0.4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["x_eps"][0], 0.2);

    let o = run(&["mvi", "--func", "max(x, -x)", "--from", "1", "--at", "-2", "--lambda", "1"]);
    assert_eq!(code(&o), 0);
    let w = json(&o);
    assert!((w["t0"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(w["dd"], 3.0);
}

#[test]
fn monotone_commands() {
    let o = run(&["absorb", "--func", "max(x, -x) on box(-1,1)", "--grid-h", "0.125"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["pass"], true);

    let o = run(&["maxmono", "--func", "max(2*x + 1, -x) on box(-1,1)", "--grid-h", "0.125"]);
    assert_eq!(code(&o), 0);

    let o = run(&["polar", "--func", "max(x, -x) on box(-1,1)", "--grid-h", "0.5", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(text.starts_with("x,xstar\n"));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 2));
}

#[test]
fn function_files_are_read() {
    let path = std::env::temp_dir().join("subdiff_lab_cli_test.plf");
    std::fs::write(&path, "# two valleys\nmin(abs(x), abs(x - 2) + 0.5)\n").unwrap();
    let arg = format!("@{}", path.display());
    let o = run(&["checkmin-dd", "--func", &arg, "--at", "0", "--region", "box(-1,3)"]);
    assert_eq!(code(&o), 0);
    std::fs::remove_file(path).ok();
}

fn without_timestamp(o: &Output) -> Value {
    let mut v = json(o);
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn quick_suite_is_deterministic() {
    let a = run(&["suite", "--seed", "7", "--quick"]);
    let b = run(&["suite", "--seed", "7", "--quick"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
    let c = run(&["suite", "--seed", "8", "--quick"]);
    assert_ne!(without_timestamp(&a), without_timestamp(&c));
}

#[test]
fn full_suite_passes_at_default_seed() {
    let o = run(&["suite", "--seed", "42", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["schema"], "subdiff-lab-report/1");
    assert_eq!(v["criteria"].as_array().unwrap().len(), 12);
    assert!(v["criteria"].as_array().unwrap().iter().all(|c| c["pass"] == true));

    let o = run(&["suite", "--seed", "42", "--quick", "--format", "csv"]);
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(text.starts_with("id,label,instances,passed,pass\n"));
    assert_eq!(text.lines().count(), 13);
}
