//! Plain-text rendering of an answer and its per-constraint terms.

use std::fmt::Write as _;

use super::types::{AnswerStatus, RetrievalAnswer, Verdict};
use crate::graph::SceneGraph;

fn status_str(s: AnswerStatus) -> &'static str {
    match s {
        AnswerStatus::Verified => "verified",
        AnswerStatus::Unverified => "unverified",
        AnswerStatus::NotChecked => "not checked",
        AnswerStatus::NoCandidates => "no candidates",
    }
}

/// Constraint legend, ranked candidates with one column per term, and the
/// verification log.
pub fn breakdown_table(graph: &SceneGraph, a: &RetrievalAnswer) -> String {
    let mut s = String::new();
    let q = &a.audit.query;
    let _ = writeln!(s, "query: {}  (parser: {})", q.raw, a.audit.parser);
    if let Some(f) = q.target_floor {
        let _ = writeln!(s, "floor filter: {f}");
    }
    for c in &q.constraints {
        let of = c.of.map(|p| format!(" of c{p}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "  c{} {:<17} {} w={:.3} {:?}{of}",
            c.index,
            format!("{:?}", c.kind),
            if c.polarity < 0 { "-" } else { "+" },
            c.weight,
            c.text
        );
    }
    let _ = write!(s, "{:>4} {:<7} {:<18} {:>5} {:>8}", "rank", "id", "label", "floor", "score");
    for c in &q.constraints {
        let _ = write!(s, " {:>7}", format!("c{}", c.index));
    }
    let _ = writeln!(s);
    for (k, c) in a.audit.candidates.iter().enumerate() {
        let o = graph.object(c.object_id).ok();
        let label = o.map(|o| o.label.as_str()).unwrap_or("?");
        let floor = o.and_then(|o| graph.floor(o.floor_id)).map(|f| f.index.to_string()).unwrap_or_else(|| "?".into());
        let _ = write!(s, "{:>4} {:<7} {:<18} {:>5} {:>8.4}", k + 1, c.object_id.to_string(), label, floor, c.score);
        for t in &c.terms {
            let _ = write!(s, " {:>7.3}", t.sim);
        }
        let _ = writeln!(s);
    }
    for v in &a.audit.verifications {
        let verdict = match v.verdict {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::ProviderUnavailable => "unavailable",
        };
        let _ = writeln!(s, "verify {}: {verdict} {}", v.object_id, v.rationale.trim());
    }
    match (a.object_id, a.centroid) {
        (Some(id), Some(c)) => {
            let _ = writeln!(
                s,
                "answer: {id} {} at ({:.3}, {:.3}, {:.3}) [{}]",
                a.label.as_deref().unwrap_or(""),
                c[0],
                c[1],
                c[2],
                status_str(a.status)
            );
        }
        _ => {
            let _ = writeln!(s, "answer: none [{}]", status_str(a.status));
        }
    }
    s
}
