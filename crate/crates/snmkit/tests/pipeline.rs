//! End-to-end runs through tables, planners and the experiment harness.

use nalgebra::{DMatrix, DVector};
use snmkit::harness::{run_experiment, write_csv, RunOptions, ScenarioConfig};
use snmkit::models::{CarModel, CarVariant, Environment, NoiseSpec, START};
use snmkit::planners::{mhfr_plan, MhfrConfig};
use snmkit::pomdp::{GaussianBelief, ParticleBelief, PomdpModel};
use snmkit::rng::stream;
use snmkit::snm::{approximate_snm, build_lookup_table, SnmLookupTable, TableConfig};

#[test]
fn noiseless_maze_has_a_collision_free_route_to_the_goal() {
    let model = CarModel::new(Environment::maze(), NoiseSpec::new(0.0, 0.0), CarVariant::default());
    let b = GaussianBelief::new(DVector::from_column_slice(&START), DMatrix::zeros(4, 4));
    let cfg = MhfrConfig {
        k_trees: 4,
        iterations: 3000,
        ..MhfrConfig::default()
    };
    let out = mhfr_plan(&b, &model, &cfg, None, &mut stream(3, &[])).unwrap();
    assert!(!out.no_goal_found);
    let mut s = START.to_vec();
    for a in &out.trajectory.actions {
        let (next, step) = model.nominal_transition(&s, a);
        assert!(!step.collided, "collision at {next:?}");
        s = next;
    }
    assert!(model.in_goal(&s));
}

#[test]
fn saved_table_answers_queries_like_the_original() {
    let model = CarModel::new(Environment::maze(), NoiseSpec::new(0.038, 0.038), CarVariant::default());
    let cfg = TableConfig {
        model: "car/maze/terminal/additive".into(),
        e_t: 0.038,
        e_z: 0.038,
        node_budget: 20,
        samples: 1000,
        bins: 5,
        seed: 4,
        with_mong: false,
    };
    let table = build_lookup_table(&model, &ParticleBelief::point(&START, 10), &cfg).unwrap();
    assert_eq!(table.len(), 20);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    table.save(&path).unwrap();
    let loaded = SnmLookupTable::load(&path).unwrap();
    for row in table.rows() {
        let b = ParticleBelief::point(&row.state, 3);
        assert_eq!(approximate_snm(&b, &loaded), row.snm());
        assert_eq!(approximate_snm(&b, &table), row.snm());
    }
    assert!(model.state_space().contains(&table.rows()[0].state));
}

#[test]
fn scenario_file_runs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = r#"{
        "id": "tiny",
        "environment": "maze",
        "noise": [{"e_t": 0.038, "e_z": 0.038}, {"e_t": 0.075, "e_z": 0.075}],
        "planners": [
            {"type": "mcts", "budget": 30, "mcts": {"max_depth": 5}},
            {"type": "mhfr", "k_trees": 1, "budget": 100},
            {"type": "snm", "threshold": 0.3, "budget": 30, "k_trees": 1, "mhfr": {"iterations": 100}}
        ],
        "episodes": 3,
        "max_steps": 8,
        "particles": 50,
        "seed": 9,
        "tables": {"node_budget": 15, "samples": 1000, "with_mong": false}
    }"#;
    let path = dir.path().join("tiny.json");
    std::fs::write(&path, scenario).unwrap();
    let cfg = ScenarioConfig::load(&path).unwrap();
    let opts = RunOptions {
        jobs: Some(2),
        build_tables: true,
    };
    let csv = |cfg: &ScenarioConfig| {
        let rows = run_experiment(cfg, dir.path(), &opts).unwrap();
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        (rows, String::from_utf8(out).unwrap())
    };
    let (rows, first) = csv(&cfg);
    assert_eq!(rows.len(), 6);
    assert!(cfg.table_path(dir.path(), cfg.noise[1]).exists());
    assert!(rows.iter().all(|r| r.episodes == 3 && r.mean_steps <= 8.0));
    let (_, second) = csv(&cfg);
    assert_eq!(first, second);
}
