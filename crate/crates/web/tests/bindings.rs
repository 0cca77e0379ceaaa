//! The bindings called natively; only success paths, since building a
//! `JsError` needs a JavaScript host.

use serde_json::Value;

use drumkit_web::{analyze_operator, eigenvalues, propeller};

const FIG1: [f64; 6] = [0.0, 0.0, 5.0, 0.0, 1.8, 2.4];

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn propeller_reports_two_seven_copy_drums() {
    let [ax, ay, bx, by, cx, cy] = FIG1;
    let r = parse(propeller(ax, ay, bx, by, cx, cy).unwrap());
    assert_eq!(r["drum1"].as_array().unwrap().len(), 7);
    assert_eq!(r["drum2"].as_array().unwrap().len(), 7);
    assert!((r["area"].as_f64().unwrap() - 42.0).abs() < 1e-9);
    assert_eq!(r["det"].as_f64().unwrap(), 24.0);
}

#[test]
fn eigenvalues_of_both_drums_agree() {
    let [ax, ay, bx, by, cx, cy] = FIG1;
    let r = parse(eigenvalues(ax, ay, bx, by, cx, cy, 2, 6, 2).unwrap());
    let gaps: Vec<f64> = serde_json::from_value(r["rel_gaps"].clone()).unwrap();
    assert_eq!(gaps.len(), 6);
    assert!(gaps.iter().all(|&g| g < 1e-8), "{gaps:?}");
    let n = r["mesh1"]["vertices"].as_array().unwrap().len();
    assert_eq!(r["mesh1"]["values"].as_array().unwrap().len(), n);
}

#[test]
fn operator_demo_refuses_transplantation_and_finds_rotation() {
    let [ax, ay, bx, by, cx, cy] = FIG1;
    let t = parse(analyze_operator(ax, ay, bx, by, cx, cy, "transplant", 0.0, 1).unwrap());
    assert_eq!(t["exit_code"], 20);
    assert!(t["witness"].is_object());
    let r = parse(analyze_operator(ax, ay, bx, by, cx, cy, "rigid", 0.6, 1).unwrap());
    assert_eq!(r["exit_code"], 0, "{r}");
    assert_eq!(r["congruent"], true);
}
