use std::sync::Arc;

use serde_json::Value;

use super::types::{Verdict, VerificationResult};
use crate::graph::{KeyframeStore, ObjectNode};
use crate::providers::{extract_json, prompts, ChatRequest, Providers, Role};
use crate::raster::Rgb;

/// Share of the box size added on each side of the crop.
pub const CROP_PADDING: f64 = 0.10;

/// Best-view crop of `obj`, padded and clipped to the image, as PNG.
pub fn best_view_crop(obj: &ObjectNode, store: &KeyframeStore) -> Result<Vec<u8>, String> {
    let kf = obj.best_view.keyframe_id;
    let bytes = store.image(kf).ok_or("image absent")?;
    let img = Rgb::from_png(&bytes).map_err(|e| format!("image unreadable: {e}"))?;
    let b = obj.best_view.bbox2d;
    let (w, h) = ((b.x1 - b.x0) as f64, (b.y1 - b.y0) as f64);
    let (px, py) = ((w * CROP_PADDING).round() as i64, (h * CROP_PADDING).round() as i64);
    let crop = img
        .crop(b.x0 as i64 - px, b.y0 as i64 - py, b.x1 as i64 + px, b.y1 as i64 + py)
        .ok_or("best-view box outside image")?;
    Ok(crop.to_png())
}

pub fn verification_request(query: &str, obj: &ObjectNode, crop: Vec<u8>) -> ChatRequest {
    ChatRequest::text(
        Role::Verifier,
        prompts::VERIFIER_AUDIT,
        format!("Request: {query}\nCandidate: {} ({})", obj.id, obj.label),
    )
    .with_image(Arc::new(crop))
}

/// Visual audit of one candidate against the full query text.
pub fn verify_candidate(obj: &ObjectNode, query: &str, store: &KeyframeStore, providers: &Providers) -> VerificationResult {
    let unavailable = |why: String| VerificationResult {
        object_id: obj.id,
        verdict: Verdict::ProviderUnavailable,
        rationale: why,
        keyframe_id: Some(obj.best_view.keyframe_id),
    };
    let crop = match best_view_crop(obj, store) {
        Ok(c) => c,
        Err(why) => return unavailable(why),
    };
    let reply = match providers.chat(&verification_request(query, obj, crop)) {
        Ok(x) => x.reply,
        Err(e) => return unavailable(e.to_string()),
    };
    let Some(v) = extract_json(&reply) else { return unavailable(format!("unparseable verdict: {reply}")) };
    let verdict = match v.get("verdict").and_then(Value::as_str).map(str::to_ascii_lowercase).as_deref() {
        Some("accept") => Verdict::Accept,
        Some("reject") => Verdict::Reject,
        _ => return unavailable(format!("verdict missing: {reply}")),
    };
    VerificationResult {
        object_id: obj.id,
        verdict,
        rationale: v.get("rationale").and_then(Value::as_str).unwrap_or("").to_string(),
        keyframe_id: Some(obj.best_view.keyframe_id),
    }
}
