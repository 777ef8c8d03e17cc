//! The Python to R curriculum and rule corpus bundled with the crate.

use crate::knowledge::RuleSet;
use crate::lesson::{parse_pack, LessonPack};

pub const PACK_JSON: &str = include_str!("../../../packs/python-to-r.pack.json");
pub const RULES_JSON: &str = include_str!("../../../packs/rules.json");

pub fn pack() -> LessonPack {
    parse_pack(PACK_JSON).expect("bundled pack parses")
}

pub fn rules() -> RuleSet {
    RuleSet::parse(RULES_JSON).expect("bundled rules parse")
}
