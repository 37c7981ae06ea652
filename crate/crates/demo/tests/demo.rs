use kbforge_demo::{cluster_json, cutoff_json, parse_counts, threshold_curve_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn curve_ends_at_low_and_high() {
    let v = parse(&threshold_curve_json(1000, 1.4, 0.95, 0.75, 4).unwrap());
    let pts = v.as_array().unwrap();
    let freqs: Vec<u64> = pts.iter().map(|p| p["frequency"].as_u64().unwrap()).collect();
    assert_eq!(freqs, vec![1, 10, 100, 1000]);
    // 1.4 * ln f / ln 1000, clipped to [0.75, 0.95]
    let expect: [f64; 4] = [0.75, 1.4 / 3.0, 1.4 * 2.0 / 3.0, 1.4];
    for (p, e) in pts.iter().zip(expect) {
        let want = e.clamp(0.75, 0.95);
        assert!((p["threshold"].as_f64().unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn curve_single_frequency_is_high() {
    let v = parse(&threshold_curve_json(1, 1.4, 0.95, 0.75, 10).unwrap());
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["threshold"].as_f64().unwrap(), 0.95);
}

#[test]
fn curve_rejects_bad_config() {
    assert!(threshold_curve_json(10, 1.4, 0.5, 0.75, 10).is_err());
    assert!(threshold_curve_json(0, 1.4, 0.95, 0.75, 10).is_err());
}

#[test]
fn spelling_variants_cluster() {
    let v = parse(&cluster_json("birth_date 5\nbirthDate 20\nspouse 3\n", 1.4, 0.95, 0.75).unwrap());
    let clusters = v.as_array().unwrap();
    assert_eq!(clusters.len(), 2);
    assert_eq!(clusters[0]["representative"], "birthDate");
    assert_eq!(clusters[0]["members"][1][0], "birth_date");
    assert_eq!(clusters[1]["representative"], "spouse");
}

#[test]
fn counts_parse_and_merge() {
    let c = parse_counts("# header\nfoo 2\nbar\nfoo, 3\n\n").unwrap();
    assert_eq!(c, vec![("foo".to_string(), 5), ("bar".to_string(), 1)]);
    assert!(parse_counts("foo 0").is_err());
}

#[test]
fn cutoff_on_sharp_drop() {
    let v = parse(&cutoff_json("2020 500\n2021 520\n2022 530\n2023 549\n2024 75\n", 0.25, 50).unwrap());
    // 75 / 549 < 0.25 and 549 >= 50; earlier ratios are all near 1
    assert_eq!(v["cutoff"], 2023);
    assert_eq!(v["counts"]["2024"], 75);
}

#[test]
fn cutoff_none_and_errors() {
    let v = parse(&cutoff_json("2020 100\n2021 100\n", 0.25, 50).unwrap());
    assert!(v["cutoff"].is_null());
    assert!(cutoff_json("nineteen 4", 0.25, 50).is_err());
    assert!(cutoff_json("2020 4", 0.0, 50).is_err());
}
