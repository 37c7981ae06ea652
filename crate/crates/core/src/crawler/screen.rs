//! Cheap literal detection run before the NER prompt.

use regex::Regex;
use std::sync::OnceLock;

pub const MAX_ENTITY_LABEL_CHARS: usize = 100;

const MONTH: &str = "(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\\.?";

fn patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        let sources = [
            // numbers, optionally with thousands separators, sign, unit-less percent
            r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?\s*%?$".to_string(),
            r"^[+-]?\.\d+$".to_string(),
            // ISO and numeric dates
            r"^\d{4}-\d{1,2}(?:-\d{1,2})?(?:T[\d:.]+Z?)?$".to_string(),
            r"^\d{1,2}[/.]\d{1,2}[/.]\d{2,4}$".to_string(),
            // years with era or decade suffix
            r"^(?:c\.\s*)?\d{1,4}\s*(?:BC|BCE|AD|CE)$".to_string(),
            r"^\d{3,4}s$".to_string(),
            // written dates
            format!(r"(?i)^{MONTH}\s+\d{{1,2}}(?:st|nd|rd|th)?,?\s+\d{{1,4}}$"),
            format!(r"(?i)^\d{{1,2}}(?:st|nd|rd|th)?\s+{MONTH},?\s+\d{{1,4}}$"),
            format!(r"(?i)^{MONTH}\s+\d{{3,4}}$"),
            // URLs
            r"(?i)^(?:https?|ftp)://\S+$".to_string(),
            r"(?i)^www\.\S+\.\S+$".to_string(),
        ];
        sources
            .iter()
            .map(|s| Regex::new(s).expect("literal screen pattern compiles"))
            .collect()
    })
}

/// True when the string is certainly not a named entity: a number, a date,
/// a URL, or longer than [`MAX_ENTITY_LABEL_CHARS`].
pub fn is_obvious_literal(value: &str) -> bool {
    let v = value.trim();
    if v.is_empty() || v.chars().count() > MAX_ENTITY_LABEL_CHARS {
        return true;
    }
    patterns().iter().any(|re| re.is_match(v))
}
