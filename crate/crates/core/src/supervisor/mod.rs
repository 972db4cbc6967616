//! Decides when the hierarchy is rebuilt and performs the rebuild.

pub mod bestview;
pub mod bev;
pub mod labels;
pub mod triggers;
pub mod update;

use log::warn;
use serde::{Deserialize, Serialize};

pub use bestview::{select_room_best_view, view_score, visible_cells, ViewCone};
pub use bev::{render_bev, BevImage};
pub use triggers::{region_at, TriggerConfig, TriggerReason, TriggerState, UpdatePoint};
pub use update::{run_update, run_update_with_masks, UpdateConfig, UpdateReport};

use crate::providers::{extract_json, prompts, ChatRequest, Providers, Role};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorMode {
    #[default]
    Rules,
    Model,
}

/// Outcome of asking the supervisor about a rules proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftDecision {
    pub trigger: bool,
    pub reason: String,
    /// False when the model was skipped or its reply unusable.
    pub from_model: bool,
}

/// Rules propose, the model (when enabled) confirms from the BEV. Any
/// provider or parse failure keeps the rules decision.
pub fn confirm_soft_trigger(
    mode: SupervisorMode,
    proposed: &TriggerReason,
    bev: Option<&BevImage>,
    providers: &Providers,
) -> SoftDecision {
    let rules = SoftDecision { trigger: true, reason: proposed.as_str().to_string(), from_model: false };
    if mode == SupervisorMode::Rules {
        return rules;
    }
    let Some(bev) = bev else { return rules };
    let req = ChatRequest::text(
        Role::Supervisor,
        prompts::SUPERVISOR_BEV,
        format!("Proposed by rules: {}", proposed.as_str()),
    )
    .with_image(std::sync::Arc::new(bev.to_png()));
    let reply = match providers.chat(&req) {
        Ok(x) => x.reply,
        Err(e) => {
            warn!("supervisor unavailable, rules decide: {e}");
            return rules;
        }
    };
    let parsed = extract_json(&reply).and_then(|v| {
        let t = v.get("trigger")?.as_bool()?;
        let r = v.get("reason").and_then(|r| r.as_str()).unwrap_or("").to_string();
        Some((t, r))
    });
    match parsed {
        Some((trigger, reason)) => SoftDecision { trigger, reason, from_model: true },
        None => {
            warn!("supervisor reply not in schema, rules decide");
            rules
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::StubChat;

    #[test]
    fn model_overrides_and_falls_back() {
        let p = Providers::stub(16, StubChat::new());
        let bev = BevImage { image: crate::raster::Rgb::filled(2, 2, [0, 0, 0]), legend: vec![], meters_per_pixel: 0.05 };
        let d = confirm_soft_trigger(SupervisorMode::Model, &TriggerReason::NewArea, Some(&bev), &p);
        assert!(d.trigger && !d.from_model);
        let p = Providers::stub(
            16,
            StubChat::new().with_default(Role::Supervisor, r#"{"trigger": false, "reason": "same room"}"#),
        );
        let d = confirm_soft_trigger(SupervisorMode::Model, &TriggerReason::NewArea, Some(&bev), &p);
        assert_eq!(d, SoftDecision { trigger: false, reason: "same room".into(), from_model: true });
        let p = Providers::stub(16, StubChat::new().with_default(Role::Supervisor, "yes"));
        assert!(confirm_soft_trigger(SupervisorMode::Model, &TriggerReason::NewArea, Some(&bev), &p).trigger);
    }
}
