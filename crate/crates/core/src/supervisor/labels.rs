//! Offline naming of areas and rooms, used when no summarizer is reachable.

use std::collections::BTreeMap;

/// Object label → room type, for the offline room namer.
const ROOM_LEXICON: &[(&str, &str)] = &[
    ("bed", "bedroom"),
    ("nightstand", "bedroom"),
    ("wardrobe", "bedroom"),
    ("dresser", "bedroom"),
    ("stove", "kitchen"),
    ("fridge", "kitchen"),
    ("oven", "kitchen"),
    ("microwave", "kitchen"),
    ("kettle", "kitchen"),
    ("sink", "kitchen"),
    ("sofa", "living room"),
    ("tv", "living room"),
    ("armchair", "living room"),
    ("coffee table", "living room"),
    ("remote", "living room"),
    ("toilet", "bathroom"),
    ("bathtub", "bathroom"),
    ("shower", "bathroom"),
    ("towel", "bathroom"),
    ("desk", "office"),
    ("monitor", "office"),
    ("office chair", "office"),
    ("printer", "office"),
    ("dining table", "dining room"),
    ("sideboard", "dining room"),
];

pub fn room_type_of(label: &str) -> Option<&'static str> {
    let l = label.trim().to_ascii_lowercase();
    ROOM_LEXICON.iter().find(|(k, _)| *k == l).map(|(_, v)| *v)
}

fn modal<'a>(items: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in items {
        *counts.entry(s).or_insert(0) += 1;
    }
    // BTreeMap order makes ties resolve to the lexicographically first key.
    let mut best: Option<(&str, usize)> = None;
    for (k, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((k, n));
        }
    }
    best.map(|(k, _)| k)
}

/// Most frequent member label followed by "area"; ties go to the
/// alphabetically first label.
pub fn stub_area_label(labels: &[String]) -> String {
    match modal(labels.iter().map(|s| s.as_str())) {
        Some(l) => format!("{l} area"),
        None => "area".to_string(),
    }
}

pub fn stub_area_summary(labels: &[String]) -> String {
    let mut uniq: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    uniq.sort();
    uniq.dedup();
    format!("contains {}", uniq.join(", "))
}

/// Majority room type over the lexicon; "room" when nothing matches.
pub fn stub_room_label(labels: &[String]) -> String {
    modal(labels.iter().filter_map(|l| room_type_of(l))).unwrap_or("room").to_string()
}

/// Room summary stitched together from its area names and summaries.
pub fn stub_room_summary(room_label: &str, areas: &[(String, String)]) -> String {
    if areas.is_empty() {
        return format!("{room_label} with no mapped objects");
    }
    let parts: Vec<String> = areas.iter().map(|(l, s)| format!("{l} ({s})")).collect();
    format!("{room_label} with {}", parts.join("; "))
}
