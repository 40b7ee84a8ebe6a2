use std::fs;
use std::path::Path;
use std::process::Command;

use amod_cli::config::RunConfig;
use amod_cli::gen::{write_grid_city, GridSpec};
use amod_cli::geojson;
use amod_cli::load::load_instance;
use amod_cli::run::{run_solve, write_outputs};
use amod_cli::validate::validate_solution;
use amod_core::oracle::{solve_full_lp, DEFAULT_GUARD};
use serde_json::Value;

fn small_city(dir: &Path) -> RunConfig {
    let spec = GridSpec {
        size: 5,
        demands: 8,
        seed: 3,
        ..GridSpec::default()
    };
    let mut cfg = write_grid_city(&spec, dir).unwrap();
    cfg.budget = 40.0;
    cfg.fleet_time = 3000.0;
    cfg
}

fn amod(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_amod")).args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("{e}: {stdout}"));
    (out.status.code().unwrap(), v)
}

#[test]
fn solve_then_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path());
    let out = run_solve(&cfg).unwrap();
    assert!(out.succeeded());
    let report = validate_solution(&out.loaded, &out.instance, &out.solution);
    assert!(report.passed, "{report:?}");

    let s = &out.solution;
    assert!(!s.instrumented_edges.is_empty());
    assert!(s.j_ip <= s.j_lp);
    let net = &out.instance.network;
    let budget: f64 = s.instrumented_edges.iter().map(|r| net.edge(r.edge).build_cost).sum();
    let fleet: f64 = s.paths.iter().map(|p| net.path_travel_time(&p.edges) * p.flow).sum();
    assert!((budget - s.usage.budget).abs() <= 1e-9 * budget.max(1.0));
    assert!((fleet - s.usage.fleet_time).abs() <= 1e-9 * fleet.max(1.0));

    let sub = geojson::subnetwork(&out.loaded, s);
    assert_eq!(sub["features"].as_array().unwrap().len(), s.instrumented_edges.len());
    let flows = geojson::flows(&out.loaded, s);
    assert_eq!(flows["features"].as_array().unwrap().len(), s.edge_flows.len());
}

#[test]
fn binary_solve_validate_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let city = dir.path().join("city");
    let d = |p: &Path| p.to_str().unwrap().to_owned();
    let (code, _) = amod(&["gen", "--out", &d(&city), "--size", "5", "--demands", "8", "--seed", "3"]);
    assert_eq!(code, 0);
    let config = d(&city.join("config.toml"));
    let flags = ["--budget", "40", "--fleet-time", "3000"];

    let a = dir.path().join("a");
    let mut args = vec!["solve", "--config", &config, "--out"];
    let a_str = d(&a);
    args.push(&a_str);
    args.extend(flags);
    let (code, summary) = amod(&args);
    assert_eq!(code, 0, "{summary}");
    for f in ["solution.json", "iterations.csv", "subnetwork.geojson", "flows.geojson", "timings.json"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let b = dir.path().join("b");
    let b_str = d(&b);
    let mut args = vec!["solve", "--config", &config, "--serial-pricing", "--out", &b_str];
    args.extend(flags);
    assert_eq!(amod(&args).0, 0);
    assert_eq!(fs::read(a.join("solution.json")).unwrap(), fs::read(b.join("solution.json")).unwrap());

    let sol = d(&a.join("solution.json"));
    let mut args = vec!["validate", "--config", &config, "--solution", &sol];
    args.extend(flags);
    let (code, report) = amod(&args);
    assert_eq!(code, 0, "{report}");
    assert_eq!(report["passed"], true);

    let c = dir.path().join("c");
    let c_str = d(&c);
    let mut args = vec!["export-geojson", "--config", &config, "--solution", &sol, "--out", &c_str];
    args.extend(flags);
    assert_eq!(amod(&args).0, 0);
    assert_eq!(
        fs::read(a.join("subnetwork.geojson")).unwrap(),
        fs::read(c.join("subnetwork.geojson")).unwrap()
    );
}

#[test]
fn errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path());
    fs::write(&cfg.demand, "origin,dest,alpha\n0,24,5\n0,oops,1\n").unwrap();
    let (code, v) = amod(&["solve", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert_ne!(code, 0);
    let msg = v["error"].as_str().unwrap();
    assert!(msg.contains(":3:"), "{msg}");

    let (code, v) = amod(&["solve", "--nodes", "/nonexistent/nodes.csv"]);
    assert_ne!(code, 0);
    assert!(v["error"].is_string());
}

#[test]
fn hand_edited_solutions_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path());
    let out = run_solve(&cfg).unwrap();

    let mut over = out.solution.clone();
    let p = over.paths.iter_mut().max_by(|a, b| a.flow.total_cmp(&b.flow)).unwrap();
    let alpha = out
        .instance
        .demands
        .iter()
        .find(|d| out.loaded.external(d.origin) == p.origin && out.loaded.external(d.dest) == p.dest)
        .unwrap()
        .alpha;
    p.flow = alpha + 1.0;
    let report = validate_solution(&out.loaded, &out.instance, &over);
    assert!(!report.check("demand").unwrap().passed);

    let mut closed = out.solution.clone();
    let used = closed.paths.iter().find(|p| p.flow > 0.0).unwrap().edges[0];
    closed.instrumented_edges.retain(|r| r.edge != used);
    let report = validate_solution(&out.loaded, &out.instance, &closed);
    assert!(!report.check("capacity").unwrap().passed);
    assert!(report.check("demand").unwrap().passed);
}

#[test]
fn zero_robust_radii_reproduce_nominal_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path());
    let nominal = run_solve(&cfg).unwrap();

    let edges = nominal.instance.network.edge_count();
    let radii: String = (0..edges).map(|e| format!("{e},0\n")).collect();
    fs::write(dir.path().join("radii.csv"), format!("edge,radius_s\n{radii}")).unwrap();
    let mut robust_cfg = cfg.clone();
    robust_cfg.robust.time_radius_file = Some(dir.path().join("radii.csv"));
    let robust = run_solve(&robust_cfg).unwrap();

    let mut a = nominal.solution.clone();
    let mut b = robust.solution.clone();
    assert!(b.config.robust.is_some());
    a.config.robust = None;
    b.config.robust = None;
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn no_fleet_time_means_no_profit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path());
    cfg.fleet_time = 0.0;
    let out = run_solve(&cfg).unwrap();
    assert_eq!(out.solution.j_ip, 0.0);
    assert!(out.solution.paths.iter().all(|p| p.flow == 0.0));
}

/// Profitable route 0 -> 1 -> 2 heads north then west (one left turn); the
/// detour 0 -> 3 -> 2 heads west then north (a right turn) and loses money.
fn left_turn_fixture(dir: &Path, left_turn_budget: Option<f64>) -> RunConfig {
    fs::write(
        dir.join("nodes.csv"),
        "id,lat,lon\n0,40.750,-73.980\n1,40.751,-73.980\n2,40.751,-73.981\n3,40.750,-73.981\n",
    )
    .unwrap();
    fs::write(
        dir.join("edges.csv"),
        "src,dst,travel_time_s,length_m,capacity,build_cost,beta\n\
         0,1,10,111,10,1,1.0\n1,2,10,84,10,1,1.0\n0,3,10,84,10,1,-1.0\n3,2,10,111,10,1,-1.0\n",
    )
    .unwrap();
    fs::write(dir.join("demand.csv"), "origin,dest,alpha\n0,2,5\n").unwrap();
    RunConfig {
        nodes: dir.join("nodes.csv"),
        edges: dir.join("edges.csv"),
        demand: dir.join("demand.csv"),
        budget: 10.0,
        fleet_time: 1000.0,
        left_turn_budget,
        ..RunConfig::default()
    }
}

#[test]
fn left_turn_budget_blocks_the_only_profitable_path() {
    let dir = tempfile::tempdir().unwrap();
    let free = run_solve(&left_turn_fixture(dir.path(), None)).unwrap();
    assert_eq!(free.solution.j_ip, 10.0);
    assert_eq!(free.solution.usage.left_turns, 5.0);

    let cfg = left_turn_fixture(dir.path(), Some(0.0));
    let loaded = load_instance(&cfg).unwrap();
    let inst = loaded.effective().unwrap();
    let full = solve_full_lp(&inst, DEFAULT_GUARD).unwrap().objective;
    let out = run_solve(&cfg).unwrap();
    assert_eq!(full, 0.0);
    assert_eq!(out.solution.j_lp, full);
    assert_eq!(out.solution.j_ip, 0.0);
    assert!(out.solution.paths.iter().all(|p| p.nodes != vec![0, 1, 2] || p.flow == 0.0));
    assert!(validate_solution(&out.loaded, &out.instance, &out.solution).passed);

    let partial = run_solve(&left_turn_fixture(dir.path(), Some(2.0))).unwrap();
    assert!((partial.solution.j_ip - 4.0).abs() < 1e-9);
    assert!(partial.solution.usage.left_turns <= 2.0 + 1e-9);
}

#[test]
fn written_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path());
    let out = run_solve(&cfg).unwrap();
    let target = dir.path().join("out");
    write_outputs(&out, &target).unwrap();
    let sub: Value = serde_json::from_str(&fs::read_to_string(target.join("subnetwork.geojson")).unwrap()).unwrap();
    let sol: Value = serde_json::from_str(&fs::read_to_string(target.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sub["type"], "FeatureCollection");
    assert_eq!(
        sub["features"].as_array().unwrap().len(),
        sol["instrumented_edges"].as_array().unwrap().len()
    );
    let csv = fs::read_to_string(target.join("iterations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + out.solution.iteration_log.len());
}
