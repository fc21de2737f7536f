mod common;

use std::io::Write;
use std::process::{Command as Process, Output};

use common::*;
use lotgame::cli::{parse_scenario, parse_scenario_str, run, Command, Overrides};
use lotgame::error::Error;
use lotgame::model::{self, Plan, Tolerances};

fn lotgame(args: &[&str]) -> Output {
    Process::new(env!("CARGO_BIN_EXE_lotgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario_arg(name: &str) -> String {
    scenario_path(name).to_string_lossy().into_owned()
}

fn write_scenario(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn input_message(text: &str) -> String {
    match parse_scenario_str(text) {
        Err(Error::InvalidInput(msg)) => msg,
        other => panic!("expected an input error, got {other:?}"),
    }
}

const ONE_FIRM: &str = r#"{"periods": [{"a": 10, "b": 1}], "firms": [{"F": 1, "H": 1, "K": 10}]}"#;

#[test]
fn shipped_scenarios_parse() {
    let sc = parse_scenario(&scenario_path("small_k10.json")).unwrap();
    assert_eq!(sc.market, small());
    assert_eq!(sc.firms, vec![firm(10.0), firm(10.0)]);
    assert_eq!(sc.names, ["firm1", "firm2"]);
    assert_eq!(sc.roles, [0, 1]);
    assert!(sc.init_q.is_none());

    let alt = parse_scenario(&scenario_path("small_k10_alt_init.json")).unwrap();
    assert_eq!(alt.init_q.as_ref().unwrap()[0][3], 7.34);
    for name in [
        "small_k25.json",
        "large_k10.json",
        "large_k25.json",
        "small_asymmetric.json",
        "small_k25_deterrence_profile.json",
    ] {
        parse_scenario(&scenario_path(name)).unwrap();
    }
}

#[test]
fn bad_scenarios_name_the_offending_field() {
    let bad_slope = r#"{"periods": [{"a": 10, "b": 1}, {"a": 10, "b": 1}, {"a": 10, "b": 0}],
        "firms": [{"F": 1, "H": 1, "K": 10}]}"#;
    assert_eq!(input_message(bad_slope), "b[3] must be > 0");
    assert_eq!(
        input_message(r#"{"periods": [{"a": 10, "b": 1}]}"#),
        "firms: required"
    );
    assert_eq!(
        input_message(r#"{"periods": [{"a": 10, "b": 1}], "firms": []}"#),
        "firms: at least one firm required"
    );
    assert_eq!(
        input_message(r#"{"periods": [{"a": 10, "b": 1}], "firms": [{"F": 1, "H": -1, "K": 10}]}"#),
        "firms[1]: H must be >= 0"
    );
    let unknown = input_message(r#"{"periods": [], "firms": [], "colour": 1}"#);
    assert!(unknown.contains("colour"), "{unknown}");
    let bad_eps = ONE_FIRM.replace("}]}", r#"}], "config": {"epsilon": 0}}"#);
    assert_eq!(input_message(&bad_eps), "config.epsilon must be > 0");
}

#[test]
fn syntax_errors_carry_a_position() {
    let msg = input_message("{\n  \"periods\": [\n    {\"a\": 10 \"b\": 1}\n  ]\n}");
    assert!(msg.starts_with("scenario syntax:"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("column"), "{msg}");
}

#[test]
fn exit_codes_separate_input_from_solver_failures() {
    let ok = lotgame(&["monopoly", "--scenario", &scenario_arg("small_k10.json")]);
    assert_eq!(ok.status.code(), Some(0));

    let bad = write_scenario(
        r#"{"periods": [{"a": 10, "b": -1}], "firms": [{"F": 1, "H": 1, "K": 10}]}"#,
    );
    let out = lotgame(&["monopoly", "--scenario", bad.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b[1] must be > 0"));

    let missing = lotgame(&["monopoly", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = lotgame(&["solve", "--scenario", &scenario_arg("small_k10.json")]);
    assert_eq!(unknown.status.code(), Some(2));
    let threads = lotgame(&[
        "monopoly",
        "--scenario",
        &scenario_arg("small_k10.json"),
        "--threads",
        "0",
    ]);
    assert_eq!(threads.status.code(), Some(2));

    let idle_leader = write_scenario(
        r#"{"periods": [{"a": 10, "b": 1}],
            "firms": [{"F": 1000, "H": 0, "K": 100}, {"F": 0, "H": 0, "K": 100}]}"#,
    );
    let out = lotgame(&[
        "deterrence",
        "--scenario",
        idle_leader.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deterrence infeasible"));

    let periods = vec![r#"{"a": 10, "b": 1}"#; 25].join(",");
    let long = write_scenario(&format!(
        r#"{{"periods": [{periods}], "firms": [{{"F": 1, "H": 1, "K": 10}}]}}"#
    ));
    let out = lotgame(&["monopoly", "--scenario", long.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too large"));
}

#[test]
fn the_repeated_game_wants_two_firms() {
    let sc = parse_scenario_str(ONE_FIRM).unwrap();
    let err = run(Command::Iterated, &sc, &Overrides::default()).unwrap_err();
    assert!(err.is_input_error(), "{err}");
}

#[test]
fn undeliverable_starting_profiles_are_rejected() {
    let sc = parse_scenario_str(
        r#"{"periods": [{"a": 10, "b": 1}], "firms": [{"F": 1, "H": 1, "K": 5}],
            "config": {"init_q": [[6]]}}"#,
    )
    .unwrap();
    let err = run(Command::Verify, &sc, &Overrides::default()).unwrap_err();
    assert!(matches!(err, Error::InfeasiblePlan { .. }), "{err}");
}

#[test]
fn monopoly_table_shows_the_profit() {
    let out = lotgame(&["monopoly", "--scenario", &scenario_arg("small_k10.json")]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("firm1: Π = 170.250"), "{text}");
    assert!(text.contains("firm2: Π = 170.250"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains('|')).count(), 8);
}

#[test]
fn equilibrium_with_large_capacities() {
    let sc = parse_scenario(&scenario_path("small_k25.json")).unwrap();
    let report = run(Command::Equilibrium, &sc, &Overrides::default()).unwrap();
    assert!(
        (report.blocks[0].profit - 62.15).abs() < 0.5,
        "{}",
        report.blocks[0].profit
    );
    assert!(
        (report.blocks[1].profit - 61.43).abs() < 0.5,
        "{}",
        report.blocks[1].profit
    );
}

struct Row {
    firm: String,
    y: bool,
    x: f64,
    h: f64,
    q: f64,
    price: f64,
    profit: f64,
}

fn parse_csv(text: &str) -> Vec<Row> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("firm,period,y,x,h,q,price,profit_total"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 8, "{l}");
            Row {
                firm: f[0].to_string(),
                y: f[2] == "1",
                x: f[3].parse().unwrap(),
                h: f[4].parse().unwrap(),
                q: f[5].parse().unwrap(),
                price: f[6].parse().unwrap(),
                profit: f[7].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn csv_output_round_trips() {
    let path = scenario_arg("small_k10.json");
    let out = lotgame(&["equilibrium", "--scenario", &path, "--output", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 12);

    let sc = parse_scenario(&scenario_path("small_k10.json")).unwrap();
    let plans: Vec<Plan> = sc
        .names
        .iter()
        .map(|name| {
            let mine: Vec<&Row> = rows.iter().filter(|r| &r.firm == name).collect();
            Plan {
                y: mine.iter().map(|r| r.y).collect(),
                x: mine.iter().map(|r| r.x).collect(),
                h: mine.iter().map(|r| r.h).collect(),
                q: mine.iter().map(|r| r.q).collect(),
            }
        })
        .collect();
    let report = run(Command::Equilibrium, &sc, &Overrides::default()).unwrap();
    for (i, plan) in plans.iter().enumerate() {
        assert!(
            model::check_feasible(&sc.market, &sc.firms[i], plan, &Tolerances::default())
                .unwrap()
                .ok()
        );
        assert_eq!(plan, &report.blocks[i].plan);
        let total = model::profit(&sc.market, &sc.firms[i], plan, &plans[1 - i].q).unwrap();
        let printed = rows.iter().find(|r| r.firm == sc.names[i]).unwrap().profit;
        assert!((total - printed).abs() < 1e-9, "{total} vs {printed}");
    }
    for (t, r) in rows.iter().take(6).enumerate() {
        let p = model::price(&sc.market, t + 1, plans[0].q[t] + plans[1].q[t]).unwrap();
        assert!((p - r.price).abs() < 1e-12);
    }
}

#[test]
fn output_does_not_depend_on_threads_or_runs() {
    let path = scenario_arg("small_k25.json");
    for command in ["monopoly", "verify", "deterrence"] {
        let one = lotgame(&[
            command,
            "--scenario",
            &path,
            "--output",
            "csv",
            "--threads",
            "1",
        ]);
        let four = lotgame(&[
            command,
            "--scenario",
            &path,
            "--output",
            "csv",
            "--threads",
            "4",
        ]);
        let again = lotgame(&[command, "--scenario", &path, "--output", "csv"]);
        assert_eq!(one.status.code(), Some(0), "{command}");
        assert_eq!(one.stdout, four.stdout, "{command}");
        assert_eq!(one.stdout, again.stdout, "{command}");
    }
}

#[test]
fn verify_accepts_the_alternative_start() {
    let path = scenario_arg("small_k10_alt_init.json");
    let strict = String::from_utf8(lotgame(&["verify", "--scenario", &path]).stdout).unwrap();
    // The profile is rounded to two decimals, so tiny gains remain.
    assert!(strict.contains("equilibrium: no"), "{strict}");
    let out = lotgame(&["verify", "--scenario", &path, "--dev-eps", "1e-3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("equilibrium: yes"), "{text}");
    assert!(text.contains("Π^1 = 64.303"), "{text}");
}

#[test]
fn iterated_overrides_reach_the_game() {
    let path = scenario_arg("small_k10.json");
    let out = lotgame(&[
        "iterated",
        "--scenario",
        &path,
        "--strategy1",
        "defect",
        "--strategy2",
        "defect",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains('D'), "{text}");
    let bad = lotgame(&["iterated", "--scenario", &path, "--role1", "2"]);
    assert_eq!(bad.status.code(), Some(2));
}
