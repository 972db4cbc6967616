//! Deterministic parser for the query grammar
//!
//! ```text
//! QUERY  := "find" TARGET (LOC | REL | NEG)*
//! LOC    := ("in" | "on floor") PHRASE
//! REL    := ("on" | "near" | "next to" | "above" | "below") PHRASE
//! NEG    := "not" (LOC | REL | ADJ)
//! TARGET := ADJ* NOUN-PHRASE
//! ```
//!
//! A clause that follows a relation describes that relation's reference
//! object ("remote on table next to sofa"). Location clauses always bind to
//! the target. Text that fits no clause becomes one description constraint.
//! Requests that do not start with "find" are kept whole as a description.

use super::types::{Constraint, ConstraintKind, ParseError, ParsedQuery};
use crate::graph::Relation;

/// Adjectives split off the target as separate attribute constraints.
const ATTRIBUTES: &[&str] = &[
    "red", "blue", "green", "yellow", "white", "black", "gray", "grey", "brown", "orange", "pink", "purple", "beige",
    "wooden", "wood", "metal", "metallic", "plastic", "glass", "leather", "fabric", "ceramic", "marble", "steel",
    "large", "small", "big", "tall", "short", "round", "square", "old", "new", "striped", "soft",
];
const ARTICLES: &[&str] = &["a", "an", "the", "some", "any", "my", "our"];
const FILLERS: &[&str] = &["that", "which", "who", "is", "are", "located", "placed", "sitting", "standing", "and", "also", "but"];
const VERBS: &[&str] = &["find", "locate"];

#[derive(Clone, Debug)]
struct Tok {
    w: String,
    start: usize,
    end: usize,
    sep: bool,
}

fn tokenize(text: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            match &mut cur {
                Some((_, s)) => s.extend(ch.to_lowercase()),
                None => cur = Some((i, ch.to_lowercase().collect())),
            }
        } else {
            if let Some((s, w)) = cur.take() {
                out.push(Tok { w, start: s, end: i, sep: false });
            }
            if matches!(ch, ',' | '.' | ';' | ':' | '!' | '?') {
                out.push(Tok { w: ch.to_string(), start: i, end: i + ch.len_utf8(), sep: true });
            }
        }
    }
    if let Some((s, w)) = cur {
        out.push(Tok { w, start: s, end: text.len(), sep: false });
    }
    out
}

fn relation_keyword(toks: &[Tok], i: usize) -> Option<(Relation, usize)> {
    let w = toks.get(i).filter(|t| !t.sep)?.w.as_str();
    let next = toks.get(i + 1).filter(|t| !t.sep).map(|t| t.w.as_str());
    Some(match (w, next) {
        ("on", _) | ("atop", _) => (Relation::On, 1),
        ("near", _) | ("by", _) => (Relation::Near, 1),
        ("next", Some("to")) => (Relation::NextTo, 2),
        ("beside", _) => (Relation::NextTo, 1),
        ("above", _) | ("over", _) => (Relation::Above, 1),
        ("below", _) | ("under", _) | ("beneath", _) | ("underneath", _) => (Relation::Below, 1),
        _ => return None,
    })
}

fn is_boundary(toks: &[Tok], i: usize) -> bool {
    let t = &toks[i];
    t.sep || t.w == "in" || t.w == "not" || FILLERS.contains(&t.w.as_str()) || relation_keyword(toks, i).is_some()
}

fn err(text: &str, start: usize, end: usize, message: &str) -> ParseError {
    let (start, end) = (start.min(text.len()), end.min(text.len()));
    ParseError { message: message.to_string(), start, end, fragment: text.get(start..end).unwrap_or("").to_string() }
}

struct Parser<'a> {
    text: &'a str,
    toks: Vec<Tok>,
    i: usize,
}

impl Parser<'_> {
    /// Words up to the next clause boundary, articles dropped.
    fn phrase(&mut self) -> (Vec<String>, usize, usize) {
        let start = self.toks.get(self.i).map(|t| t.start).unwrap_or(self.text.len());
        let mut end = start;
        let mut words = Vec::new();
        while self.i < self.toks.len() && !is_boundary(&self.toks, self.i) {
            let t = &self.toks[self.i];
            if !ARTICLES.contains(&t.w.as_str()) {
                words.push(t.w.clone());
            }
            end = t.end;
            self.i += 1;
        }
        (words, start, end)
    }

    fn skip_articles(&mut self) {
        while self.i < self.toks.len() && ARTICLES.contains(&self.toks[self.i].w.as_str()) {
            self.i += 1;
        }
    }

    fn word_at(&self, i: usize) -> Option<&str> {
        self.toks.get(i).filter(|t| !t.sep).map(|t| t.w.as_str())
    }

    /// Recognizes "floor 2", "the second floor", "2nd floor" at the cursor.
    fn floor_clause(&mut self) -> Option<String> {
        let save = self.i;
        self.skip_articles();
        let a = self.word_at(self.i).map(str::to_string);
        let b = self.word_at(self.i + 1).map(str::to_string);
        match (a.as_deref(), b.as_deref()) {
            (Some("floor"), Some(n)) if super::types::parse_floor_index(n).is_some() => {
                self.i += 2;
                Some(n.to_string())
            }
            (Some(n), Some("floor")) if super::types::parse_floor_index(n).is_some() => {
                self.i += 2;
                Some(n.to_string())
            }
            _ => {
                self.i = save;
                None
            }
        }
    }
}

pub fn parse_query_rules(text: &str) -> Result<ParsedQuery, ParseError> {
    let toks = tokenize(text);
    let words: Vec<&Tok> = toks.iter().filter(|t| !t.sep).collect();
    let Some(first) = words.first() else {
        return Err(err(text, 0, text.len(), "empty query"));
    };
    if !VERBS.contains(&first.w.as_str()) {
        let mut c = Constraint::new(ConstraintKind::Description, text.trim());
        c.weight = 1.0;
        return Ok(ParsedQuery::finalize(text, vec![c]));
    }
    let verb_end = first.end;
    let start_idx = toks.iter().position(|t| t.start == first.start).expect("word present") + 1;
    let mut p = Parser { text, toks, i: start_idx };

    let (target_words, ts, te) = p.phrase();
    let (attrs, nouns): (Vec<String>, Vec<String>) =
        target_words.into_iter().partition(|w| ATTRIBUTES.contains(&w.as_str()));
    if nouns.is_empty() && attrs.is_empty() {
        let end = p.toks.get(p.i).map(|t| t.end).unwrap_or(text.len());
        return Err(err(text, verb_end.min(ts), end.max(te), "no target object after \"find\""));
    }
    let noun = if nouns.is_empty() { "object".to_string() } else { nouns.join(" ") };
    let mut cs = vec![Constraint::new(ConstraintKind::TargetAttribute, noun)];
    for a in attrs {
        cs.push(Constraint::new(ConstraintKind::TargetAttribute, a));
    }

    let mut last_rel: Option<usize> = None;
    let mut negate = false;
    let mut copula = false;
    let mut neg_span = (0, 0);
    let mut leftover: Vec<String> = Vec::new();
    let mut has_floor = false;
    while p.i < p.toks.len() {
        let t = p.toks[p.i].clone();
        if t.sep {
            copula = false;
            p.i += 1;
            continue;
        }
        if FILLERS.contains(&t.w.as_str()) {
            copula |= t.w == "is" || t.w == "are";
            p.i += 1;
            continue;
        }
        if t.w == "not" {
            if negate {
                return Err(err(text, t.start, t.end, "double negation"));
            }
            negate = true;
            neg_span = (t.start, t.end);
            p.i += 1;
            continue;
        }
        let on_floor = t.w == "on" && {
            let save = p.i;
            p.i += 1;
            let f = p.floor_clause().is_some();
            p.i = save;
            f
        };
        let mut c = if t.w == "in" || on_floor {
            p.i += 1;
            last_rel = None;
            if let Some(n) = p.floor_clause() {
                if has_floor {
                    return Err(err(text, t.start, p.toks[p.i - 1].end, "more than one floor constraint"));
                }
                has_floor = true;
                Constraint::new(ConstraintKind::Floor, n)
            } else {
                let (ws, _, e) = p.phrase();
                if ws.is_empty() {
                    return Err(err(text, t.start, e.max(t.end), "missing place after \"in\""));
                }
                let kind = if ws.last().is_some_and(|w| w == "area") { ConstraintKind::Area } else { ConstraintKind::Room };
                Constraint::new(kind, ws.join(" "))
            }
        } else if let Some((rel, n)) = relation_keyword(&p.toks, p.i) {
            p.i += n;
            let (ws, _, e) = p.phrase();
            if ws.is_empty() {
                return Err(err(text, t.start, e.max(t.end), "missing reference object"));
            }
            let mut c = Constraint::relation(rel, ws.join(" "));
            if let Some(parent) = last_rel {
                c = c.of(parent);
            }
            last_rel = Some(cs.len());
            c
        } else {
            let before = p.i;
            let (ws, _, _) = p.phrase();
            if ws.is_empty() {
                p.i = p.i.max(before + 1);
                continue;
            }
            if !(negate || copula) {
                leftover.extend(ws);
                continue;
            }
            let mut c = Constraint::new(ConstraintKind::TargetAttribute, ws.join(" "));
            if let Some(parent) = last_rel {
                c = c.of(parent);
            }
            c
        };
        if negate {
            c = c.negated();
            negate = false;
        }
        copula = false;
        cs.push(c);
    }
    if negate {
        return Err(err(text, neg_span.0, neg_span.1, "\"not\" without a clause"));
    }
    if !leftover.is_empty() {
        cs.push(Constraint::new(ConstraintKind::Description, leftover.join(" ")));
    }
    for c in cs.iter_mut() {
        c.weight = 1.0;
    }
    Ok(ParsedQuery::finalize(text, cs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(q: &ParsedQuery) -> Vec<(ConstraintKind, String, i8, Option<usize>)> {
        q.constraints.iter().map(|c| (c.kind, c.text.clone(), c.polarity, c.of)).collect()
    }

    #[test]
    fn room_query() {
        let q = parse_query_rules("Find a chair in the bedroom.").unwrap();
        assert_eq!(
            summary(&q),
            vec![
                (ConstraintKind::TargetAttribute, "chair".into(), 1, None),
                (ConstraintKind::Room, "bedroom".into(), 1, None)
            ]
        );
        assert_eq!(q.constraints.iter().map(|c| c.weight).collect::<Vec<_>>(), vec![0.5, 0.5]);
    }

    #[test]
    fn negated_attribute() {
        let q = parse_query_rules("Find a pillow that is not blue.").unwrap();
        assert_eq!(
            summary(&q),
            vec![
                (ConstraintKind::TargetAttribute, "pillow".into(), 1, None),
                (ConstraintKind::TargetAttribute, "blue".into(), -1, None)
            ]
        );
    }

    #[test]
    fn chained_relation() {
        let q = parse_query_rules("Find remote on table next to sofa.").unwrap();
        let c = &q.constraints;
        assert_eq!(c.len(), 3);
        assert_eq!((c[1].relation, c[1].reference.as_deref(), c[1].of), (Some(Relation::On), Some("table"), None));
        assert_eq!((c[2].relation, c[2].reference.as_deref(), c[2].of), (Some(Relation::NextTo), Some("sofa"), Some(1)));
    }

    #[test]
    fn floors_and_areas() {
        let q = parse_query_rules("find a wooden cabinet on floor 1").unwrap();
        assert_eq!(q.target_floor, Some(1));
        assert_eq!(q.constraints.len(), 3);
        assert_eq!(q.constraints[2].weight, 0.0);
        assert!((q.constraints[0].weight - 0.5).abs() < 1e-12);
        let q = parse_query_rules("find a mug in the dining area").unwrap();
        assert_eq!(q.constraints[1].kind, ConstraintKind::Area);
        let q = parse_query_rules("find the lamp on the second floor").unwrap();
        assert_eq!(q.target_floor, Some(2));
        assert!(parse_query_rules("find a lamp on floor 1 on floor 2").is_err());
    }

    #[test]
    fn negated_chain_and_reference_attribute() {
        let q = parse_query_rules("Find book on desk not near sofa").unwrap();
        assert_eq!((q.constraints[2].polarity, q.constraints[2].of), (-1, Some(1)));
        let q = parse_query_rules("Find pillow on bed that is not wooden").unwrap();
        assert_eq!(summary(&q)[2], (ConstraintKind::TargetAttribute, "wooden".into(), -1, Some(1)));
        let q = parse_query_rules("find a chair not in the kitchen").unwrap();
        assert_eq!(summary(&q)[1], (ConstraintKind::Room, "kitchen".into(), -1, None));
    }

    #[test]
    fn errors_carry_spans() {
        let e = parse_query_rules("find the").unwrap_err();
        assert!(e.start <= 4 && e.end <= 8, "{e:?}");
        let e = parse_query_rules("find a chair near").unwrap_err();
        assert_eq!(e.fragment, "near");
        assert!(parse_query_rules("   ").is_err());
        assert!(parse_query_rules("find a chair not").is_err());
    }

    #[test]
    fn fuzzy_requests_become_descriptions() {
        let q = parse_query_rules("I want to sleep, and preferably no mirrors").unwrap();
        assert_eq!(q.k(), 1);
        assert_eq!(q.constraints[0].kind, ConstraintKind::Description);
    }

    #[test]
    fn trailing_text_is_description() {
        let q = parse_query_rules("find a chair in the kitchen, preferably comfy").unwrap();
        assert_eq!(q.constraints.last().unwrap().kind, ConstraintKind::Description);
        assert_eq!(q.constraints.last().unwrap().text, "preferably comfy");
    }
}
