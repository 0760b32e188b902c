//! End-to-end checks of the installed binary: output formats, determinism,
//! and the exit-code contract (0 success, 1 usage, 2 tolerance violation).

use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_thermal-mbqc"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("no signal"),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

#[test]
fn sweep_emits_the_documented_csv() {
    let (code, stdout, _) = run(&[
        "sweep", "--model", "3d", "--t-min", "0", "--t-max", "0.5", "--steps", "11",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "t_over_delta,epsilon,p1,p2,p3,p_eff");
    assert_eq!(lines.len(), 12);
    let mut prev_eps = -1.0f64;
    for row in &lines[1..] {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 6);
        assert!(vals[1] >= prev_eps, "epsilon must be nondecreasing");
        prev_eps = vals[1];
        // effective rate decomposition carried into the serialization
        assert!((vals[5] - (vals[2] + vals[3] + 2.0 * vals[4])).abs() < 1e-15);
    }
    assert!(stdout.ends_with('\n') && !stdout.contains('\r'));
}

#[test]
fn sweep_output_is_byte_stable() {
    let args = ["sweep", "--model", "2d", "--t-min", "0.05", "--t-max", "0.3", "--steps", "7"];
    let (c1, first, _) = run(&args);
    let (c2, second, _) = run(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(first, second);

    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "2"]);
    let (c3, third, _) = run(&with_jobs);
    assert_eq!(c3, 0);
    assert_eq!(first, third, "worker count must not change the output");
}

#[test]
fn degenerate_zero_grid_gives_one_zero_row() {
    let (code, stdout, _) = run(&[
        "sweep", "--model", "2d", "--t-min", "0", "--t-max", "0", "--steps", "1",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    for field in lines[1].split(',') {
        assert_eq!(field, "0.0000000000000000e0");
    }
}

#[test]
fn sweep_writes_the_out_file() {
    let path = std::env::temp_dir().join("thermal_mbqc_cli_test_sweep.csv");
    let path_str = path.to_str().unwrap();
    let args = ["sweep", "--model", "3d", "--t-min", "0.1", "--t-max", "0.2", "--steps", "3"];
    let (code, stdout, _) = run(&[&args[..], &["--out", path_str]].concat());
    assert_eq!(code, 0);
    assert!(stdout.is_empty(), "file mode must not also print");
    let written = std::fs::read_to_string(&path).unwrap();
    let (_, direct, _) = run(&args);
    assert_eq!(written, direct);
    std::fs::remove_file(&path).ok();
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["frobnicate"][..],
        &["sweep", "--model", "2d", "--steps", "0"][..],
        &["sweep", "--model", "2d", "--t-min", "0", "--log-grid"][..],
        &["sweep", "--model", "2d", "--t-min", "0.4", "--t-max", "0.2"][..],
        &["sweep", "--model", "2d", "--t-min", "0.1", "--t-max", "0.2", "--steps", "1"][..],
        &["sweep"][..],
        &["threshold", "--model", "3d", "--p-target", "0"][..],
        &["threshold", "--model", "3d", "--p-target", "1.5"][..],
        &["demo", "schedule", "--model", "2d", "--cells", "0"][..],
    ] {
        let (code, _, stderr) = run(args);
        assert_eq!(code, 1, "expected usage failure for {args:?}");
        assert!(!stderr.is_empty(), "usage failures explain themselves: {args:?}");
    }
}

#[test]
fn threshold_report_is_bit_identical_across_runs() {
    let args = ["threshold", "--model", "3d", "--p-target", "0.03"];
    let (c1, first, _) = run(&args);
    let (c2, second, _) = run(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(first, second);
    assert!(first.starts_with("T_t/delta = 0.2"), "threshold near 0.2: {first}");
    for field in ["p1 = ", "p2 = ", "p3 = "] {
        assert!(first.contains(field), "missing {field} in {first}");
    }
}

#[test]
fn unreachable_threshold_target_exits_two() {
    let (code, _, stderr) = run(&["threshold", "--model", "3d", "--p-target", "0.5"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unreachable"), "stderr names the failure: {stderr}");
}

#[test]
fn spectrum_tables_carry_the_exact_levels() {
    let (code, out_2d, _) = run(&["spectrum", "--model", "2d"]);
    assert_eq!(code, 0);
    assert!(out_2d.contains("-3.75 1"));
    assert!(out_2d.contains("gap/delta = 1"));

    let (code, out_3d, _) = run(&["spectrum", "--model", "3d"]);
    assert_eq!(code, 0);
    assert!(out_3d.contains("-6 1"));
    assert!(out_3d.contains("-5 3"));
    for (out, expected) in [(&out_2d, 32u64), (&out_3d, 80u64)] {
        let total: u64 = out
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("gap"))
            .map(|l| l.split_whitespace().nth(1).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, expected);
    }
}

#[test]
fn demos_report_pass_and_exit_zero() {
    let (code, stdout, _) = run(&["demo", "fusion", "--model", "2d"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("cluster fidelity 1.000000 (T=0), PASS"), "{stdout}");

    let (code, stdout, _) = run(&["demo", "revival", "--model", "3d"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS"), "{stdout}");

    let (code, stdout, _) = run(&["demo", "schedule", "--model", "2d", "--cells", "1"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS"), "{stdout}");
}
