//! End-to-end runs of the command-line entry point.

use std::io::Write;

use usecon_cli::report::RunReport;
use usecon_cli::{main_with, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION};

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("usecon").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn json_report(args: &[&str]) -> (i32, RunReport) {
    let mut full = args.to_vec();
    full.extend(["--output", "json"]);
    let (code, out, err) = invoke(&full);
    assert!(err.is_empty(), "{err}");
    (code, RunReport::from_json(&out).unwrap())
}

fn system_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn ongoing_two_uses_passes_everything() {
    let (code, r) = json_report(&[
        "check", "--model", "ongoing", "--uses", "2", "--policy", "true", "--checks", "all",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(r.statistics.triple(), "7,33,16".parse().unwrap());
    assert!(r.verdicts.iter().all(|v| v.passed));
    assert_eq!(r.verdicts.len(), 4);
}

#[test]
fn all_denied_terminal_is_expected() {
    let (code, r) = json_report(&[
        "check", "--model", "pre", "--uses", "2", "--policy", "false", "--checks", "deadlock",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        (r.deadlocks.expected_terminal, r.deadlocks.unexpected),
        (1, 0)
    );
    assert_eq!(r.deadlocks.samples[0].state.matches("denied").count(), 2);
}

#[test]
fn unfair_liveness_fails_with_a_lasso() {
    let (code, r) = json_report(&[
        "check",
        "--model",
        "ongoing",
        "--uses",
        "1",
        "--policy",
        "true",
        "--fairness",
        "none",
        "--checks",
        "liveness",
    ]);
    assert_eq!(code, EXIT_VIOLATION);
    assert!(!r.violations.is_empty());
    for v in &r.violations {
        assert!(v.cycle_start.is_some() && v.replays);
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(invoke(&["check", "--uses", "2"]).0, EXIT_USAGE);
    assert_eq!(
        invoke(&["check", "--model", "sideways", "--uses", "2"]).0,
        EXIT_USAGE
    );
    assert_eq!(
        invoke(&["check", "--model", "pre", "--uses", "2", "--checks", "bogus"]).0,
        EXIT_USAGE
    );
    assert_eq!(
        invoke(&["check", "--model", "pre", "--uses", "2", "--policy", "(= 1"]).0,
        EXIT_USAGE
    );
    assert_eq!(
        invoke(&["check", "--system", "/nonexistent/system.ucon"]).0,
        EXIT_USAGE
    );
    assert_eq!(invoke(&["table2", "--uses", "3"]).0, EXIT_USAGE);
    assert_eq!(invoke(&["frobnicate"]).0, EXIT_USAGE);
}

#[test]
fn system_file_with_attributes_and_policy_file() {
    let policy = system_file(r#"(= (attr subject role) "doctor")"#);
    let sys = system_file(
        "[model]\nkind = pre\n\n[entities]\nsubject alice role=doctor\nsubject bob role=nurse\naction read\nobject rec\n\n[domains]\natt = {0..1} init 0\n\n[updates]\npreUpdate: st=activated, att=1\n",
    );
    let policy_arg = format!("@{}", policy.path().display());
    let (code, r) = json_report(&[
        "check",
        "--system",
        sys.path().to_str().unwrap(),
        "--policy",
        &policy_arg,
    ]);
    assert_eq!(code, EXIT_OK, "{r:?}");
    assert_eq!(r.config.uses, 2);
    // alice: absent, requested, activated, completed; bob: absent, requested, denied.
    assert_eq!(r.statistics.distinct_states, 4 * 3);
}

#[test]
fn budget_exhaustion_reports_partial_statistics() {
    let (code, r) = json_report(&[
        "check",
        "--model",
        "pre",
        "--uses",
        "4",
        "--memory-limit",
        "20",
        "--checks",
        "deadlock",
    ]);
    assert_eq!(code, EXIT_VIOLATION);
    assert!(r.statistics.partial);
    assert!(r.statistics.distinct_states <= 20);
    assert!(!r.verdicts[0].passed);
}

#[test]
fn graph_emission_lists_every_edge() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    let (code, r) = json_report(&[
        "check",
        "--model",
        "ongoing",
        "--uses",
        "2",
        "--emit-graph",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count() as u64, r.statistics.states_found - 1);
    assert!(text.lines().all(|l| l.split(' ').count() == 3));
}

#[test]
fn expectation_comparison() {
    let (code, r) = json_report(&[
        "check", "--model", "pre", "--uses", "2", "--expect", "6,21,12",
    ]);
    assert_eq!(code, EXIT_OK);
    let c = r.comparison.unwrap();
    assert!(!c.diameter_matches && !c.found_matches && !c.distinct_matches);
}

#[test]
fn machine_reports_round_trip_and_are_deterministic() {
    let args = [
        "check",
        "--model",
        "pre",
        "--uses",
        "3",
        "--policy",
        "activated-lt-2",
        "--output",
        "json",
    ];
    let (_, a, _) = invoke(&args);
    let (_, b, _) = invoke(&args);
    let mut ra = RunReport::from_json(&a).unwrap();
    assert_eq!(RunReport::from_json(&ra.to_json()).unwrap(), ra);
    let mut rb = RunReport::from_json(&b).unwrap();
    ra.statistics.elapsed_seconds = 0.0;
    rb.statistics.elapsed_seconds = 0.0;
    assert_eq!(ra.to_json(), rb.to_json());
}

#[test]
fn fingerprint_mode_matches_exact_counts() {
    let (_, exact) = json_report(&[
        "check", "--model", "ongoing", "--uses", "4", "--checks", "deadlock",
    ]);
    let (_, fp) = json_report(&[
        "check",
        "--model",
        "ongoing",
        "--uses",
        "4",
        "--checks",
        "deadlock",
        "--fingerprint",
    ]);
    assert!(fp.statistics.approximate);
    assert_eq!(fp.statistics.triple(), exact.statistics.triple());
}

#[test]
fn sweep_ranks_a_candidate_against_its_own_output() {
    let (code, out, _) = invoke(&[
        "sweep", "--model", "pre", "--uses", "2", "--target", "5,13,9", "--output", "json",
    ]);
    assert_eq!(code, EXIT_OK);
    let r: usecon_cli::report::SweepReport = serde_json::from_str(&out).unwrap();
    assert_eq!(r.ranking[0].policy, "false");
    assert_eq!(r.ranking[0].distance, Some(0));
    assert!(r.ranking[0].exact);
    let d: Vec<u64> = r.ranking.iter().filter_map(|e| e.distance).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));

    let (code, out, _) = invoke(&[
        "sweep",
        "--model",
        "pre",
        "--uses",
        "2",
        "--candidates",
        "",
        "--output",
        "json",
    ]);
    assert_eq!(code, EXIT_OK);
    let r: usecon_cli::report::SweepReport = serde_json::from_str(&out).unwrap();
    assert!(r.ranking.is_empty());
}
