use halfstrip_core::scenario::{load_scenario, parse_scenario, scenario_hash, scenario_to_json, write_scenario};

const SCENARIOS: &[&str] = &[
    r#"{"task":"classify","model":{"family":"correlated_rw","q":0.5,"c":-1.0},"params":{}}"#,
    r#"{"task":"simulate","seed":3,"model":{"family":"correlated_rw","q":0.4,"c_plus":1.0,"c_minus":-0.5,"n_steps_memory":2},"params":{"paths":10,"steps":100}}"#,
    r#"{"task":"llt","seed":1,"law":{"family":"lazy_ssrw","d":2},"params":{"n":50,"samples":100000,"target":"com"}}"#,
    r#"{"task":"lattice","law":{"family":"table","points":[[0],[2],[5]],"probs":[0.2,0.3,0.5]},"params":{}}"#,
    r#"{"task":"stable","law":{"family":"heavy_tail","alpha":0.5},"params":{"points":11}}"#,
];

#[test]
fn scenarios_round_trip_through_json_and_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (k, text) in SCENARIOS.iter().enumerate() {
        let sc = parse_scenario(text).unwrap_or_else(|e| panic!("{k}: {e}"));
        let again = parse_scenario(&scenario_to_json(&sc).unwrap()).unwrap();
        assert_eq!(scenario_hash(&sc).unwrap(), scenario_hash(&again).unwrap());
        let path = dir.path().join(format!("s{k}.json"));
        write_scenario(&path, &sc).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(scenario_to_json(&loaded).unwrap(), scenario_to_json(&sc).unwrap());
    }
}

#[test]
fn hash_ignores_output_names_but_not_parameters() {
    let a = parse_scenario(SCENARIOS[1]).unwrap();
    let b = parse_scenario(&SCENARIOS[1].replace(r#""params""#, r#""outputs":{"table":"x.csv"},"params""#)).unwrap();
    let c = parse_scenario(&SCENARIOS[1].replace(r#""seed":3"#, r#""seed":4"#)).unwrap();
    assert_eq!(scenario_hash(&a).unwrap(), scenario_hash(&b).unwrap());
    assert_ne!(scenario_hash(&a).unwrap(), scenario_hash(&c).unwrap());
}
