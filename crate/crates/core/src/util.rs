//! Small internal helpers shared across modules.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use regex::Regex;

/// Compile-once regex cache. Text scanning happens on every round of a
/// benchmark run, and compiling the same fixed patterns each time dominates
/// the runtime; identical patterns share one compiled regex for the life of
/// the process instead. Only call with known-valid patterns.
pub(crate) fn regex(pattern: &str) -> &'static Regex {
    static CACHE: OnceLock<Mutex<HashMap<String, &'static Regex>>> = OnceLock::new();
    let mut map = CACHE
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("regex cache lock");
    if let Some(re) = map.get(pattern) {
        return re;
    }
    let compiled: &'static Regex =
        Box::leak(Box::new(Regex::new(pattern).expect("valid regex pattern")));
    map.insert(pattern.to_string(), compiled);
    compiled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_patterns_share_one_instance() {
        let a = regex(r"\d+cache-test");
        let b = regex(r"\d+cache-test");
        assert!(std::ptr::eq(a, b));
        assert!(a.is_match("12cache-test"));
    }
}
