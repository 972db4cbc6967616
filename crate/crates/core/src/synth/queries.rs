//! Query bank: templated queries with positives and mined hard negatives,
//! all decided from world truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use super::world::{PlacedObject, WorldSpec, COLORS, MATERIALS};
use super::SynthError;
use crate::graph::Relation;
use crate::supervisor::labels::stub_area_label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub id: String,
    /// Taxonomy code, e.g. `D2`.
    pub template: String,
    pub text: String,
    /// World object ids that answer the query.
    pub positives: Vec<u64>,
    /// Objects that satisfy every constraint except the one under test.
    pub hard_negatives: Vec<u64>,
    /// Floor named in the query, if any.
    pub floor: Option<u32>,
    /// No machine-checkable truth; scored by a human or a model judge.
    #[serde(default)]
    pub manual_eval: bool,
}

impl QueryInstance {
    pub fn is_negation(&self) -> bool {
        self.template.starts_with('D')
    }

    pub fn is_area(&self) -> bool {
        self.template == "B1"
    }
}

pub const TEMPLATES: &[&str] = &["A1", "B1", "C1", "C2", "D1", "D2", "D3", "D4", "D5", "E1", "F1"];

struct Facts<'a> {
    w: &'a WorldSpec,
    /// Area name of each group, named the way the offline labeller would.
    area_names: BTreeMap<usize, String>,
    rel: BTreeSet<(u64, Relation, u64)>,
}

impl<'a> Facts<'a> {
    fn new(w: &'a WorldSpec) -> Self {
        let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for o in &w.objects {
            members.entry(o.group).or_default().push(o.label.clone());
        }
        let area_names = members.into_iter().map(|(g, ls)| (g, stub_area_label(&ls))).collect();
        let mut rel = BTreeSet::new();
        for r in &w.relations {
            rel.insert((r.src, r.relation, r.dst));
            if r.relation.is_symmetric() {
                rel.insert((r.dst, r.relation, r.src));
            }
        }
        Facts { w, area_names, rel }
    }

    fn kind(&self, o: &PlacedObject) -> &str {
        self.w.room(o.room).map(|r| r.kind.as_str()).unwrap_or("")
    }

    fn of_label<'s>(&'s self, l: &'s str) -> impl Iterator<Item = &'a PlacedObject> + 's {
        self.w.objects.iter().filter(move |o| o.label == l)
    }

    /// Objects that `o` relates to by `r`, as labels.
    fn related_to(&self, o: u64, r: Relation, label: &str) -> Vec<u64> {
        self.w
            .objects
            .iter()
            .filter(|m| m.label == label && self.rel.contains(&(o, r, m.id)))
            .map(|m| m.id)
            .collect()
    }

    fn has(&self, o: u64, r: Relation, label: &str) -> bool {
        !self.related_to(o, r, label).is_empty()
    }

    fn support(&self, o: &PlacedObject) -> Option<&'a PlacedObject> {
        o.support.and_then(|s| self.w.object(s))
    }
}

fn ids<'a>(it: impl Iterator<Item = &'a PlacedObject>) -> Vec<u64> {
    let mut v: Vec<u64> = it.map(|o| o.id).collect();
    v.sort();
    v.dedup();
    v
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

struct Draft {
    text: String,
    positives: Vec<u64>,
    hard_negatives: Vec<u64>,
    floor: Option<u32>,
}

fn draft(text: String, positives: Vec<u64>, hard_negatives: Vec<u64>) -> Option<Draft> {
    (!positives.is_empty() && !hard_negatives.is_empty()).then_some(Draft { text, positives, hard_negatives, floor: None })
}

fn candidates(f: &Facts, template: &str) -> Vec<Draft> {
    let w = f.w;
    let labels: Vec<String> = w.labels().into_keys().collect();
    let kinds: BTreeSet<String> = w.floors.iter().flat_map(|fl| fl.rooms.iter().map(|r| r.kind.clone())).collect();
    let attrs: Vec<&str> = COLORS.iter().chain(MATERIALS).copied().collect();
    // labels that something stands on
    let supports: BTreeSet<String> =
        w.objects.iter().filter_map(|o| f.support(o)).map(|s| s.label.clone()).collect();
    let mut out = Vec::new();
    match template {
        "A1" | "D1" => {
            for l in &labels {
                for k in &kinds {
                    let inside = ids(f.of_label(l).filter(|o| f.kind(o) == k));
                    let outside = ids(f.of_label(l).filter(|o| f.kind(o) != k));
                    let d = if template == "A1" {
                        draft(format!("find {} {l} in the {k}", article(l)), inside, outside)
                    } else {
                        draft(format!("find {} {l} not in the {k}", article(l)), outside, inside)
                    };
                    out.extend(d);
                }
            }
        }
        "B1" => {
            let names: BTreeSet<&String> = f.area_names.values().collect();
            for l in &labels {
                for n in &names {
                    let pos: Vec<&PlacedObject> = f.of_label(l).filter(|o| f.area_names.get(&o.group) == Some(*n)).collect();
                    let rooms: BTreeSet<usize> = pos.iter().map(|o| o.room).collect();
                    let hn = ids(f
                        .of_label(l)
                        .filter(|o| rooms.contains(&o.room) && f.area_names.get(&o.group) != Some(*n)));
                    out.extend(draft(format!("find {} {l} in the {n}", article(l)), ids(pos.into_iter()), hn));
                }
            }
        }
        "C1" => {
            for l in &labels {
                for m in &labels {
                    if m == l {
                        continue;
                    }
                    for (word, rel) in [("on", Relation::On), ("near", Relation::Near)] {
                        if rel == Relation::On && !supports.contains(m) {
                            continue;
                        }
                        let pos = ids(f.of_label(l).filter(|o| f.has(o.id, rel, m)));
                        let hn = ids(f.of_label(l).filter(|o| !f.has(o.id, rel, m)));
                        out.extend(draft(format!("find {} {l} {word} the {m}", article(l)), pos, hn));
                    }
                }
            }
        }
        "C2" | "D3" => {
            for l in &labels {
                for m in supports.iter() {
                    let on_m: Vec<&PlacedObject> =
                        f.of_label(l).filter(|o| f.support(o).is_some_and(|s| &s.label == m)).collect();
                    if on_m.is_empty() {
                        continue;
                    }
                    for n in &labels {
                        if n == m || n == l {
                            continue;
                        }
                        let rel = if template == "C2" { Relation::NextTo } else { Relation::Near };
                        let hit = |o: &&PlacedObject| f.support(o).is_some_and(|s| f.has(s.id, rel, n));
                        let yes = ids(on_m.iter().copied().filter(hit));
                        let no = ids(on_m.iter().copied().filter(|o| !hit(o)));
                        let d = if template == "C2" {
                            // near misses: on an m without the neighbour, or on
                            // some other support that has it
                            let elsewhere = f.of_label(l).filter(|o| {
                                f.support(o).is_some_and(|s| &s.label != m && f.has(s.id, rel, n))
                            });
                            let mut no = no;
                            no.extend(ids(elsewhere));
                            no.sort();
                            draft(format!("find the {l} on the {m} next to the {n}"), yes, no)
                        } else {
                            let elsewhere = f.of_label(l).filter(|o| {
                                f.support(o).is_some_and(|s| &s.label != m && !f.has(s.id, rel, n))
                            });
                            let mut yes = yes;
                            yes.extend(ids(elsewhere));
                            yes.sort();
                            draft(format!("find the {l} on the {m} not near the {n}"), no, yes)
                        };
                        out.extend(d);
                    }
                }
            }
        }
        "D2" => {
            for l in &labels {
                for m in &labels {
                    if m == l {
                        continue;
                    }
                    let near = ids(f.of_label(l).filter(|o| f.has(o.id, Relation::Near, m)));
                    let far = ids(f.of_label(l).filter(|o| !f.has(o.id, Relation::Near, m)));
                    out.extend(draft(format!("find {} {l} not near the {m}", article(l)), far, near));
                }
            }
        }
        "D4" => {
            for l in &labels {
                for a in &attrs {
                    let with = ids(f.of_label(l).filter(|o| o.attributes.iter().any(|x| x == a)));
                    let without = ids(f.of_label(l).filter(|o| !o.attributes.iter().any(|x| x == a)));
                    out.extend(draft(format!("find {} {l} that is not {a}", article(l)), without, with));
                }
            }
        }
        "D5" => {
            for l in &labels {
                for m in supports.iter() {
                    let on_m: Vec<&PlacedObject> =
                        f.of_label(l).filter(|o| f.support(o).is_some_and(|s| &s.label == m)).collect();
                    for a in &attrs {
                        let bad = |o: &&PlacedObject| f.support(o).is_some_and(|s| s.attributes.iter().any(|x| x == a));
                        let with = ids(on_m.iter().copied().filter(bad));
                        let without = ids(on_m.iter().copied().filter(|o| !bad(o)));
                        out.extend(draft(format!("find the {l} on the {m} that is not {a}"), without, with));
                    }
                }
            }
        }
        "E1" => {
            for l in &labels {
                for a in &attrs {
                    for fl in &w.floors {
                        let has = |o: &&PlacedObject| o.attributes.iter().any(|x| x == a);
                        let pos = ids(f.of_label(l).filter(|o| o.floor == fl.index && has(o)));
                        let hn = ids(f.of_label(l).filter(|o| (o.floor != fl.index) != !has(o)));
                        if let Some(mut d) = draft(format!("find {} {a} {l} on floor {}", article(a), fl.index), pos, hn) {
                            d.floor = Some(fl.index);
                            out.push(d);
                        }
                    }
                }
            }
        }
        "F1" => {
            let fuzzy: &[(&str, &[&str])] = &[
                ("I want to sleep, and preferably no mirrors", &["bed"]),
                ("somewhere comfortable to sit and watch something", &["sofa", "armchair"]),
                ("I need to wash my hands", &["sink"]),
                ("something to read before bed", &["book"]),
            ];
            for (text, want) in fuzzy {
                let pos = ids(w.objects.iter().filter(|o| want.contains(&o.label.as_str())));
                if !pos.is_empty() {
                    out.push(Draft { text: text.to_string(), positives: pos, hard_negatives: Vec::new(), floor: None });
                }
            }
        }
        _ => {}
    }
    out
}

/// Instantiates every template against `world`, at most `cap` instances
/// per template. Templates with no satisfiable instance are skipped.
pub fn generate_query_bank(world: &WorldSpec, cap: usize) -> Result<Vec<QueryInstance>, SynthError> {
    let rooms: usize = world.floors.iter().map(|f| f.rooms.len()).sum();
    if rooms < 2 || world.objects.len() < 5 {
        return Err(SynthError::Infeasible(format!(
            "query bank needs at least 2 rooms and 5 objects, world has {rooms} and {}",
            world.objects.len()
        )));
    }
    let facts = Facts::new(world);
    let mut rng = SplitMix64::new(world.seed).fork(0x9e37);
    let mut bank = Vec::new();
    for t in TEMPLATES {
        let mut c = candidates(&facts, t);
        if c.is_empty() {
            log::info!("template {t} skipped: no satisfiable instance in world {}", world.seed);
            continue;
        }
        rng.shuffle(&mut c);
        for (k, d) in c.into_iter().take(cap).enumerate() {
            bank.push(QueryInstance {
                id: format!("{t}-{k}"),
                template: t.to_string(),
                text: d.text,
                positives: d.positives,
                hard_negatives: d.hard_negatives,
                floor: d.floor,
                manual_eval: *t == "F1",
            });
        }
    }
    Ok(bank)
}

/// Grammar-conforming query texts over the world's vocabulary, without
/// truth. Used for scorer cross-checks.
pub fn random_queries(world: &WorldSpec, seed: u64, n: usize) -> Vec<String> {
    let mut rng = SplitMix64::new(seed).fork(0x51);
    let labels: Vec<String> = world.labels().into_keys().collect();
    if labels.is_empty() {
        return Vec::new();
    }
    let kinds: Vec<String> =
        world.floors.iter().flat_map(|f| f.rooms.iter().map(|r| r.kind.clone())).collect::<BTreeSet<_>>().into_iter().collect();
    let attrs: Vec<&str> = COLORS.iter().chain(MATERIALS).copied().collect();
    let floors: Vec<u32> = world.floors.iter().map(|f| f.index).collect();
    let rels = ["on", "near", "next to", "above", "below"];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let l = rng.pick(&labels).clone();
        let mut q = if rng.chance(0.3) { format!("find the {} {l}", rng.pick(&attrs)) } else { format!("find the {l}") };
        for _ in 0..rng.range_usize(0, 3) {
            let neg = if rng.chance(0.35) { "not " } else { "" };
            let clause = match rng.below(6) {
                0 => format!(" {neg}in the {}", rng.pick(&kinds)),
                1 => format!(" {neg}in the {} area", rng.pick(&labels)),
                2 | 3 => format!(" {neg}{} the {}", rng.pick(&rels), rng.pick(&labels)),
                4 => format!(" that is {neg}{}", rng.pick(&attrs)),
                _ => {
                    if q.contains("floor") {
                        continue;
                    }
                    format!(" on floor {}", rng.pick(&floors))
                }
            };
            q.push_str(&clause);
        }
        out.push(q);
    }
    out
}
