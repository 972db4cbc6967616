use ikb_wasm::{demo_bev, demo_explain, demo_labels, demo_segment};

#[test]
fn segmentation_recovers_rooms() {
    let v: serde_json::Value = serde_json::from_str(&demo_segment(3, 4, 0.45).unwrap()).unwrap();
    assert_eq!(v["partition"], true);
    let rooms = v["true_rooms"].as_array().unwrap();
    assert_eq!(rooms.len(), 4);
    assert!(rooms.iter().all(|r| r["best_iou"].as_f64().unwrap() >= 0.9), "{v}");
}

#[test]
fn bev_is_a_png() {
    let png = demo_bev(1, 3, 0.45).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
}

#[test]
fn explain_lists_terms_and_an_answer() {
    let labels = demo_labels(0, 3).unwrap();
    let first = labels.split(", ").next().unwrap().to_string();
    let t = demo_explain(0, 3, &format!("find a {first}")).unwrap();
    assert!(t.contains("c0") && t.contains("answer: o"), "{t}");
    assert!(demo_explain(0, 3, "find a").is_err());
    assert!(demo_segment(0, 0, 0.45).is_err());
}
