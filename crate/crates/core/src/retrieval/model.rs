//! Three-call model parser: decomposition, negation, weighting.

use log::warn;
use serde_json::Value;

use super::rules::parse_query_rules;
use super::types::{parse_floor_index, Constraint, ConstraintKind, ParseError, ParsedQuery};
use crate::graph::Relation;
use crate::providers::{extract_json, prompts, ChatRequest, Providers, Role};

pub fn decompose_request(text: &str) -> ChatRequest {
    ChatRequest::text(Role::Parser, prompts::PARSER_DECOMPOSE, text)
}

fn listing(text: &str, cs: &[Constraint]) -> String {
    let mut s = format!("Request: {text}\nConstraints:\n");
    for (i, c) in cs.iter().enumerate() {
        let kind = serde_json::to_value(c.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        s.push_str(&format!("{i}. {kind}: {}\n", c.text));
    }
    s
}

pub fn negation_request(text: &str, cs: &[Constraint]) -> ChatRequest {
    ChatRequest::text(Role::Parser, prompts::PARSER_NEGATION, listing(text, cs))
}

pub fn weighting_request(text: &str, cs: &[Constraint]) -> ChatRequest {
    ChatRequest::text(Role::Parser, prompts::PARSER_WEIGHTING, listing(text, cs))
}

fn parse_constraints(v: &Value) -> Result<Vec<Constraint>, String> {
    let arr = v.get("constraints").and_then(Value::as_array).ok_or("missing constraints array")?;
    if arr.is_empty() {
        return Err("empty constraints".into());
    }
    let mut out: Vec<Constraint> = Vec::new();
    let mut floors = 0;
    for (i, item) in arr.iter().enumerate() {
        let kind = item
            .get("kind")
            .and_then(Value::as_str)
            .and_then(ConstraintKind::parse)
            .ok_or_else(|| format!("constraint {i}: bad kind"))?;
        let text = item.get("text").and_then(Value::as_str).unwrap_or("").trim().to_string();
        let of = match item.get("of") {
            None | Some(Value::Null) => None,
            Some(x) => {
                let p = x.as_u64().ok_or_else(|| format!("constraint {i}: bad of"))? as usize;
                if p >= i || out[p].kind != ConstraintKind::Relation {
                    return Err(format!("constraint {i}: of must name an earlier relation"));
                }
                Some(p)
            }
        };
        let mut c = match kind {
            ConstraintKind::Relation => {
                let rel = item
                    .get("relation")
                    .and_then(Value::as_str)
                    .and_then(Relation::parse)
                    .ok_or_else(|| format!("constraint {i}: bad relation"))?;
                let reference = item
                    .get("reference")
                    .and_then(Value::as_str)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| format!("constraint {i}: missing reference"))?;
                Constraint::relation(rel, reference)
            }
            ConstraintKind::Floor => {
                floors += 1;
                if parse_floor_index(&text).is_none() {
                    return Err(format!("constraint {i}: floor without index"));
                }
                Constraint::new(kind, text)
            }
            _ => {
                if text.is_empty() {
                    return Err(format!("constraint {i}: empty text"));
                }
                Constraint::new(kind, text)
            }
        };
        c.of = of;
        out.push(c);
    }
    if floors > 1 {
        return Err("more than one floor constraint".into());
    }
    Ok(out)
}

fn parse_polarity(v: &Value, k: usize) -> Result<Vec<i8>, String> {
    let arr = v.get("polarity").and_then(Value::as_array).ok_or("missing polarity array")?;
    if arr.len() != k {
        return Err(format!("polarity has {} entries, expected {k}", arr.len()));
    }
    arr.iter()
        .map(|x| match x.as_i64() {
            Some(1) => Ok(1),
            Some(-1) => Ok(-1),
            _ => Err(format!("polarity {x} not in {{1, -1}}")),
        })
        .collect()
}

fn parse_weights(v: &Value, k: usize) -> Result<Vec<f64>, String> {
    let arr = v.get("weights").and_then(Value::as_array).ok_or("missing weights array")?;
    if arr.len() != k {
        return Err(format!("weights has {} entries, expected {k}", arr.len()));
    }
    let w: Vec<f64> = arr.iter().map(|x| x.as_f64().unwrap_or(-1.0)).collect();
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("weights must be finite and non-negative".into());
    }
    Ok(w)
}

/// Runs the three parser roles. Any unreachable provider or schema
/// violation yields exactly the rules parse. The second value names the
/// parser that produced the result.
pub fn parse_query_model(text: &str, providers: &Providers) -> Result<(ParsedQuery, &'static str), ParseError> {
    match try_model(text, providers) {
        Ok(q) => Ok((q, "model")),
        Err(why) => {
            warn!("model parse fell back to rules: {why}");
            parse_query_rules(text).map(|q| (q, "rules"))
        }
    }
}

fn try_model(text: &str, providers: &Providers) -> Result<ParsedQuery, String> {
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    let ask = |req: ChatRequest| -> Result<Value, String> {
        let reply = providers.chat(&req).map_err(|e| e.to_string())?.reply;
        extract_json(&reply).ok_or_else(|| "reply is not JSON".to_string())
    };
    let mut cs = parse_constraints(&ask(decompose_request(text))?)?;
    let pol = parse_polarity(&ask(negation_request(text, &cs))?, cs.len())?;
    let w = parse_weights(&ask(weighting_request(text, &cs))?, cs.len())?;
    let scoring: f64 = cs.iter().zip(&w).filter(|(c, _)| c.kind != ConstraintKind::Floor).map(|(_, w)| *w).sum();
    if scoring <= 0.0 {
        return Err("all scoring weights are zero".into());
    }
    for ((c, p), w) in cs.iter_mut().zip(pol).zip(w) {
        c.polarity = p;
        c.weight = w;
    }
    Ok(ParsedQuery::finalize(text, cs))
}
