use serde_json::Value;
use sparse_pmp_web::{control_branches, solve_oscillator, time_scaling};

fn parse(text: String) -> Value {
    serde_json::from_str(&text).unwrap()
}

#[test]
fn coarse_oscillator_solve_reports_trace_and_trajectory() {
    let r = parse(solve_oscillator(0, 200, 20_000));
    assert_eq!(r["converged"], true, "{r}");
    assert!(r["phi_norm"].as_f64().unwrap() <= 1e-3);
    let t = r["t"].as_array().unwrap();
    assert_eq!(t.len(), r["control"].as_array().unwrap().len());
    assert!(!r["trace"].as_array().unwrap().is_empty());
    let x_end = r["position"].as_array().unwrap().last().unwrap().as_f64().unwrap();
    assert!(x_end.abs() < 1e-3);
}

#[test]
fn branches_switch_where_the_penalty_is_paid() {
    let r = parse(control_branches(-1.0, -1.0, 1.0, 3.0, 601));
    for p in r["points"].as_array().unwrap() {
        let (c, u) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
        let expected = if c > 1.0 { 1.0 } else if c < -1.0 { -1.0 } else { 0.0 };
        if (c.abs() - 1.0).abs() > 1e-9 {
            assert_eq!(u, expected, "c = {c}");
        }
    }
    assert!(parse(control_branches(-1.0, 1.0, -1.0, 3.0, 10)).get("error").is_some());
}

#[test]
fn scaling_keeps_cost_and_endpoints() {
    let r = parse(time_scaling(&[1.0, 3.0, 0.5, 2.0, 1.0]));
    assert!(r["cost_gap"].as_f64().unwrap() <= 1e-9, "{r}");
    let t = r["t"].as_array().unwrap();
    assert_eq!(t.first().unwrap().as_f64().unwrap(), 0.0);
    assert!((t.last().unwrap().as_f64().unwrap() - 15.0).abs() < 1e-12);
    assert!(t.windows(2).all(|w| w[1].as_f64() >= w[0].as_f64()));
    assert!(parse(time_scaling(&[1.0, -1.0])).get("error").is_some());
}
