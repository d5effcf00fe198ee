use m3i_wasm::{condition_table, pose, run_simulation};
use serde_json::Value;

const FLIP: &str = "tick 1000\nrule flip_to_mute: when light.level < 5.0 then set ringer = vibrate else set ringer = normal\n";

fn light(t: u64, v: f64) -> String {
    format!("{{\"t\":{t},\"factor\":\"light.level\",\"value\":{{\"kind\":\"float\",\"value\":{v:?}}}}}\n")
}

#[test]
fn simulate_matches_golden() {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
    let got = run_simulation(&read("flip_to_mute.m3i"), &read("flip_to_mute.jsonl"), 0).unwrap();
    assert_eq!(got, read("flip_to_mute.timeline.jsonl"));
}

#[test]
fn simulate_reports_errors() {
    let trace = light(0, 120.0) + &light(1500, 3.0);
    let out = run_simulation(FLIP, &trace, 500).unwrap();
    let rings: Vec<String> = out
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["device"]["ringer"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(rings, ["normal", "normal", "normal", "vibrate"]);
    let err = run_simulation("rule r: when light.levle < 3.0 then nothing", "", 100).unwrap_err();
    assert!(err.starts_with("1:14: error:"), "{err}");
    assert!(
        run_simulation("rule r: when light.level < 3.0 then nothing", "", 0)
            .unwrap_err()
            .contains("tick")
    );
    assert!(run_simulation(FLIP, "{nope", 0)
        .unwrap_err()
        .starts_with("trace:"));
}

#[test]
fn pose_names() {
    assert_eq!(pose(0.0, 9.81, 0.0), "upright");
    assert_eq!(pose(0.0, 0.0, -9.81), "display_down");
    assert_eq!(pose(3.0, 3.0, 3.0), "undetermined");
}

#[test]
fn truth_table_is_kleene() {
    let t: Value =
        serde_json::from_str(&condition_table("(a.x == true or b.y > 2) and a.x == true").unwrap())
            .unwrap();
    assert_eq!(
        t["propositions"],
        serde_json::json!(["a.x == true", "b.y > 2"])
    );
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    // Inputs cycle fastest in the first column.
    assert_eq!(rows[1]["inputs"], serde_json::json!(["unknown", "false"]));
    assert_eq!(rows[1]["result"], "unknown");
    assert_eq!(rows[3]["inputs"], serde_json::json!(["false", "unknown"]));
    assert_eq!(rows[3]["result"], "false");
    assert_eq!(rows[8]["result"], "true");
    assert!(condition_table("a.x ==").is_err());
    let wide = (0..7)
        .map(|i| format!("f.x{i} == true"))
        .collect::<Vec<_>>()
        .join(" or ");
    assert!(condition_table(&wide).unwrap_err().contains("at most 6"));
}
