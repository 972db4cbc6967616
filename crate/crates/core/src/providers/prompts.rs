//! Fixed prompt texts, one per model call site.

pub const PARSER_DECOMPOSE: &str = include_str!("../../prompts/parser_decompose.txt");
pub const PARSER_NEGATION: &str = include_str!("../../prompts/parser_negation.txt");
pub const PARSER_WEIGHTING: &str = include_str!("../../prompts/parser_weighting.txt");
pub const SUPERVISOR_BEV: &str = include_str!("../../prompts/supervisor_bev.txt");
pub const RELATION_TOPOLOGY: &str = include_str!("../../prompts/relation_topology.txt");
pub const VERIFIER_AUDIT: &str = include_str!("../../prompts/verifier_audit.txt");
pub const SUMMARIZER_AREA: &str = include_str!("../../prompts/summarizer_area.txt");
pub const SUMMARIZER_ROOM: &str = include_str!("../../prompts/summarizer_room.txt");
pub const MEMORY_FUSION: &str = include_str!("../../prompts/memory_fusion.txt");
