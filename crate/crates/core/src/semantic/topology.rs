use std::collections::BTreeMap;
use std::sync::Arc;

use super::associate::AssociationConfig;
use crate::graph::{EdgeSource, ObjectNode, Relation, SpatialEdge};
use crate::ids::ObjectId;
use crate::providers::{extract_json, prompts, ChatRequest, Providers, Role};

pub const ON_GAP_MIN_M: f64 = -0.05;
pub const ON_GAP_MAX_M: f64 = 0.15;
pub const MIN_FOOTPRINT_OVERLAP: f64 = 0.30;
pub const MIN_VERTICAL_OVERLAP: f64 = 0.50;

/// Single-linkage clusters of object centroids on the horizontal plane.
/// Returns cluster index per input, numbered by first member.
pub fn cluster_xy(points: &[[f64; 2]], radius: f64) -> Vec<usize> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
            if d <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut label = BTreeMap::new();
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            let next = label.len();
            *label.entry(r).or_insert(next)
        })
        .collect()
}

fn edge(src: ObjectId, dst: ObjectId, relation: Relation, source: EdgeSource) -> SpatialEdge {
    SpatialEdge { src, dst, relation, confidence: 1.0, source }.canonical()
}

/// Geometric relations between one pair, in both directions.
pub fn pair_relations(a: &ObjectNode, b: &ObjectNode, cfg: &AssociationConfig) -> Vec<SpatialEdge> {
    let mut out = Vec::new();
    let min_fp = a.bbox3d.footprint_area().min(b.bbox3d.footprint_area());
    let overlap = if min_fp > 0.0 { a.bbox3d.footprint_overlap(&b.bbox3d) / min_fp } else { 0.0 };
    for (top, bottom) in [(a, b), (b, a)] {
        let gap = top.bbox3d.min[2] - bottom.bbox3d.max[2];
        if overlap >= MIN_FOOTPRINT_OVERLAP {
            if (ON_GAP_MIN_M..=ON_GAP_MAX_M).contains(&gap) {
                out.push(edge(top.id, bottom.id, Relation::On, EdgeSource::Geometric));
            } else if gap > ON_GAP_MAX_M {
                out.push(edge(top.id, bottom.id, Relation::Above, EdgeSource::Geometric));
                out.push(edge(bottom.id, top.id, Relation::Below, EdgeSource::Geometric));
            }
        }
    }
    let dxy = ((a.centroid[0] - b.centroid[0]).powi(2) + (a.centroid[1] - b.centroid[1]).powi(2)).sqrt();
    if dxy < cfg.near_distance_m {
        out.push(edge(a.id, b.id, Relation::Near, EdgeSource::Geometric));
        let min_h = a.bbox3d.extent()[2].min(b.bbox3d.extent()[2]);
        if min_h > 0.0 && a.bbox3d.vertical_overlap(&b.bbox3d) / min_h >= MIN_VERTICAL_OVERLAP {
            out.push(edge(a.id, b.id, Relation::NextTo, EdgeSource::Geometric));
        }
    }
    out
}

/// Pairs of objects that share a horizontal cluster.
pub fn clustered_pairs(objects: &[ObjectNode], radius: f64) -> Vec<(usize, usize)> {
    let pts: Vec<[f64; 2]> = objects.iter().map(|o| o.xy()).collect();
    let cl = cluster_xy(&pts, radius);
    let mut out = Vec::new();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            if cl[i] == cl[j] {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn geometric_topology(objects: &[ObjectNode], cfg: &AssociationConfig) -> Vec<SpatialEdge> {
    let mut out: Vec<SpatialEdge> = clustered_pairs(objects, cfg.cluster_radius_m)
        .into_iter()
        .flat_map(|(i, j)| pair_relations(&objects[i], &objects[j], cfg))
        .collect();
    out.sort_by_key(|e| e.key());
    out.dedup_by_key(|e| e.key());
    out
}

/// Relations from the relation provider over an annotated frame. Pairs whose
/// entry is malformed, and every pair when the reply cannot be parsed, fall
/// back to geometric rules.
pub fn model_topology(
    objects: &[ObjectNode],
    image: Option<Arc<Vec<u8>>>,
    providers: &Providers,
    cfg: &AssociationConfig,
) -> Vec<SpatialEdge> {
    let pairs = clustered_pairs(objects, cfg.cluster_radius_m);
    if pairs.is_empty() {
        return Vec::new();
    }
    let listing: Vec<String> = objects
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let b = o.best_view.bbox2d;
            format!("{k}: {} [{}, {}, {}, {}]", o.label, b.x0, b.y0, b.x1, b.y1)
        })
        .collect();
    let mut req = ChatRequest::text(Role::Relation, prompts::RELATION_TOPOLOGY, listing.join("\n"));
    if let Some(img) = image {
        req = req.with_image(img);
    }
    let geometric = || geometric_topology(objects, cfg);
    let reply = match providers.chat(&req) {
        Ok(x) => x.reply,
        Err(e) => {
            log::info!("relation provider failed, using geometric topology: {e}");
            return geometric();
        }
    };
    let Some(rels) = extract_json(&reply).and_then(|v| v.get("relations").cloned()).and_then(|v| v.as_array().cloned())
    else {
        log::info!("unparseable relation reply, using geometric topology");
        return geometric();
    };
    let in_cluster = |i: usize, j: usize| pairs.contains(&(i.min(j), i.max(j)));
    let mut out = Vec::new();
    let mut fallback_pairs = Vec::new();
    for r in rels {
        let s = r.get("subject").and_then(|v| v.as_u64()).map(|v| v as usize);
        let o = r.get("object").and_then(|v| v.as_u64()).map(|v| v as usize);
        let rel = r.get("relation").and_then(|v| v.as_str()).and_then(Relation::parse);
        let conf = r.get("confidence").and_then(|v| v.as_f64()).unwrap_or(1.0).clamp(0.0, 1.0);
        match (s, o, rel) {
            (Some(s), Some(o), Some(rel)) if s < objects.len() && o < objects.len() && s != o => {
                out.push(
                    SpatialEdge { src: objects[s].id, dst: objects[o].id, relation: rel, confidence: conf, source: EdgeSource::Model }
                        .canonical(),
                );
            }
            (Some(s), Some(o), _) if s < objects.len() && o < objects.len() && s != o && in_cluster(s, o) => {
                fallback_pairs.push((s.min(o), s.max(o)));
            }
            _ => {}
        }
    }
    for (i, j) in fallback_pairs {
        out.extend(pair_relations(&objects[i], &objects[j], cfg));
    }
    out.sort_by_key(|e| e.key());
    out.dedup_by_key(|e| e.key());
    out
}
