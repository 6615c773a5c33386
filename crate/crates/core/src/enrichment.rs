//! Pre-generation prompt enrichment: pattern rules that scan an instruction
//! and inject targeted corrections (with worked coordinate examples) into
//! the planner prompt before the planning call.
//!
//! Rules are independent and composable: each fires on its own trigger, no
//! rule reads another's output, and the enriched prompt is the base prompt
//! followed by one delimited correction block per fired rule in rule-set
//! order. Triggers are case-insensitive literal substrings or regular
//! expressions over the raw instruction text — deliberately shallow, so
//! firing is auditable.

use regex::RegexBuilder;
use serde::Deserialize;
use thiserror::Error;

/// Marks the start of an injected correction block; tests and log scrapers
/// count occurrences of this sentinel.
pub const CORRECTION_OPEN: &str = "--- correction (";
pub const CORRECTION_CLOSE: &str = "--- end correction ---";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerKind {
    /// Case-insensitive literal substring match.
    Substring,
    /// Case-insensitive regular expression match.
    Regex,
}

/// One enrichment rule: a trigger pattern plus the correction and worked
/// example injected when it fires.
#[derive(Debug, Clone)]
pub struct EnrichmentRule {
    pub id: String,
    pub trigger: String,
    pub trigger_kind: TriggerKind,
    pub correction: String,
    pub example: String,
    matcher: Matcher,
}

#[derive(Debug, Clone)]
enum Matcher {
    Substring(String),
    Regex(regex::Regex),
}

impl EnrichmentRule {
    pub fn matches(&self, instruction: &str) -> bool {
        match &self.matcher {
            Matcher::Substring(needle) => instruction.to_lowercase().contains(needle),
            Matcher::Regex(re) => re.is_match(instruction),
        }
    }
}

#[derive(Debug, Error)]
pub enum EnrichmentError {
    #[error("rule config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate rule id \"{id}\"")]
    DuplicateId { id: String },
    #[error("rule \"{id}\": bad trigger pattern: {message}")]
    BadPattern { id: String, message: String },
}

#[derive(Deserialize)]
struct RawRule {
    id: String,
    trigger: String,
    trigger_kind: TriggerKind,
    correction: String,
    example: String,
}

/// Parses and compiles a rule-config document (a JSON array of rules).
pub fn load_rules(source: &str) -> Result<Vec<EnrichmentRule>, EnrichmentError> {
    let raw: Vec<RawRule> = serde_json::from_str(source)?;
    let mut rules = Vec::with_capacity(raw.len());
    let mut seen = std::collections::BTreeSet::new();
    for r in raw {
        if !seen.insert(r.id.clone()) {
            return Err(EnrichmentError::DuplicateId { id: r.id });
        }
        let matcher = match r.trigger_kind {
            TriggerKind::Substring => Matcher::Substring(r.trigger.to_lowercase()),
            TriggerKind::Regex => Matcher::Regex(
                RegexBuilder::new(&r.trigger)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| EnrichmentError::BadPattern {
                        id: r.id.clone(),
                        message: e.to_string(),
                    })?,
            ),
        };
        rules.push(EnrichmentRule {
            id: r.id,
            trigger: r.trigger,
            trigger_kind: r.trigger_kind,
            correction: r.correction,
            example: r.example,
            matcher,
        });
    }
    Ok(rules)
}

/// The bundled default rule set: the five published correction rules
/// (in-front placement, each-end after extend, L-shape extend, chain
/// references, T-shape extend). Parsed and compiled once per process.
pub fn bundled_rules() -> &'static [EnrichmentRule] {
    static RULES: std::sync::OnceLock<Vec<EnrichmentRule>> = std::sync::OnceLock::new();
    RULES.get_or_init(|| {
        load_rules(include_str!("../assets/enrichment_rules.json"))
            .expect("bundled rule file is valid")
    })
}

/// The bundled trigger-free control corpus used to check that enrichment
/// stays quiet on ordinary instructions.
pub fn control_instructions() -> Vec<String> {
    serde_json::from_str(include_str!("../assets/control_instructions.json"))
        .expect("bundled control corpus is valid")
}

/// Every rule whose trigger matches the instruction, in rule-set order.
pub fn match_rules<'a>(
    instruction: &str,
    rules: &'a [EnrichmentRule],
) -> Vec<&'a EnrichmentRule> {
    rules.iter().filter(|r| r.matches(instruction)).collect()
}

/// Appends one delimited correction block per fired rule to the base
/// prompt, in firing order. No fired rules returns the base unchanged.
pub fn enrich_prompt(base: &str, fired: &[&EnrichmentRule]) -> String {
    let mut out = base.to_string();
    for rule in fired {
        out.push_str(&correction_block(rule));
    }
    out
}

fn correction_block(rule: &EnrichmentRule) -> String {
    format!(
        "\n\n{open}{id}) ---\n{correction}\nExample: {example}\n{close}",
        open = CORRECTION_OPEN,
        id = rule.id,
        correction = rule.correction,
        example = rule.example,
        close = CORRECTION_CLOSE,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fired_ids(instruction: &str) -> Vec<String> {
        let rules = bundled_rules();
        match_rules(instruction, &rules)
            .iter()
            .map(|r| r.id.clone())
            .collect()
    }

    #[test]
    fn bundled_set_has_the_five_rules() {
        let rules = bundled_rules();
        let ids: Vec<_> = rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(
            ids,
            vec![
                "in_front_of",
                "each_end_after_extend",
                "l_shape_extend",
                "chain_reference",
                "t_shape_extend"
            ]
        );
        assert_eq!(rules[0].trigger, "in front of");
        assert_eq!(rules[0].trigger_kind, TriggerKind::Substring);
    }

    #[test]
    fn load_rejects_duplicate_ids_and_bad_patterns() {
        let dup = r#"[
            {"id":"a","trigger":"x","trigger_kind":"substring","correction":"c","example":"e"},
            {"id":"a","trigger":"y","trigger_kind":"substring","correction":"c","example":"e"}
        ]"#;
        assert!(matches!(
            load_rules(dup),
            Err(EnrichmentError::DuplicateId { id }) if id == "a"
        ));

        let bad = r#"[{"id":"b","trigger":"(unclosed","trigger_kind":"regex","correction":"c","example":"e"}]"#;
        assert!(matches!(
            load_rules(bad),
            Err(EnrichmentError::BadPattern { id, .. }) if id == "b"
        ));

        assert!(load_rules("[]").unwrap().is_empty());
    }

    #[test]
    fn in_front_and_chain_reference_fire_together() {
        assert_eq!(
            fired_ids("place a block in front of the red one"),
            vec!["in_front_of", "chain_reference"]
        );
    }

    #[test]
    fn plain_instruction_fires_nothing() {
        assert!(fired_ids("add three blue blocks").is_empty());
    }

    #[test]
    fn each_end_needs_a_preceding_extend() {
        assert_eq!(
            fired_ids("Extend the green row east by 2, then add a purple block to each end."),
            vec!["each_end_after_extend"]
        );
        // Without the extend context the phrase alone stays quiet.
        assert!(fired_ids("add a purple block to each end").is_empty());
    }

    #[test]
    fn shape_extend_rules_fire_in_either_phrase_order() {
        assert_eq!(
            fired_ids("Extend the yellow L-shape west by 2."),
            vec!["l_shape_extend"]
        );
        assert_eq!(
            fired_ids("The L shape should be extended to the west."),
            vec!["l_shape_extend"]
        );
        assert_eq!(
            fired_ids("EXTEND THE GREEN T-SHAPE'S STEM SOUTH BY 2."),
            vec!["t_shape_extend"]
        );
        assert!(fired_ids("Admire the t-shape.").is_empty());
    }

    #[test]
    fn chain_reference_needs_a_color_word() {
        assert!(fired_ids("place a block next to the tall one").is_empty());
        assert_eq!(
            fired_ids("put it behind the BLUE one"),
            vec!["chain_reference"]
        );
    }

    #[test]
    fn enrich_prompt_is_identity_without_fired_rules() {
        let base = "build the thing";
        assert_eq!(enrich_prompt(base, &[]), base);
    }

    #[test]
    fn enrich_prompt_appends_delimited_blocks_in_order() {
        let rules = bundled_rules();
        let fired = match_rules("place a block in front of the red one", &rules);
        let out = enrich_prompt("BASE", &fired);
        assert!(out.starts_with("BASE"));
        assert_eq!(out.matches(CORRECTION_OPEN).count(), 2);
        assert_eq!(out.matches(CORRECTION_CLOSE).count(), 2);
        let first = out.find("in_front_of").unwrap();
        let second = out.find("chain_reference").unwrap();
        assert!(first < second);
        // Each block carries its rule's correction and example verbatim.
        assert!(out.contains(&rules[0].correction));
        assert!(out.contains(&rules[0].example));
    }

    #[test]
    fn enrichment_composes_blockwise() {
        let rules = bundled_rules();
        let a = match_rules("in front of it", &rules);
        let b = match_rules("the green one", &rules);
        let both = match_rules("in front of the green one", &rules);
        let blocks = |fired: &[&EnrichmentRule]| enrich_prompt("", fired);
        assert_eq!(blocks(&both), format!("{}{}", blocks(&a), blocks(&b)));
    }

    #[test]
    fn control_corpus_fires_zero_rules() {
        let rules = bundled_rules();
        let corpus = control_instructions();
        assert_eq!(corpus.len(), 20);
        for instruction in &corpus {
            let fired = match_rules(instruction, &rules);
            assert!(
                fired.is_empty(),
                "control instruction fired {:?}: {instruction}",
                fired.iter().map(|r| &r.id).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn matching_and_enrichment_are_deterministic() {
        let rules = bundled_rules();
        let instruction = "Extend the L-shape, then add a block to each end, in front of the red one.";
        let once = enrich_prompt("base", &match_rules(instruction, &rules));
        let twice = enrich_prompt("base", &match_rules(instruction, &rules));
        assert_eq!(once, twice);
    }
}
