//! Extraction of predictions from free-text responses.

use std::sync::OnceLock;

use regex::Regex;

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)(?P<num>[-+]?(?:\d+(?:\.\d*)?|\.\d+))(?:\s*[)\]])?(?:\s*(?P<unit>millimet(?:er|re)s?|centimet(?:er|re)s?|met(?:er|re)s?|mm|cm|m|feet|foot|ft|inches|inch|in))?(?P<after>[a-z]?)",
        )
        .unwrap()
    })
}

fn unit_scale(unit: &str) -> Option<f64> {
    let u = unit.to_lowercase();
    Some(match u.as_str() {
        "" | "m" => 1.0,
        "cm" => 0.01,
        "mm" => 0.001,
        "ft" | "feet" | "foot" => 0.3048,
        "in" | "inch" | "inches" => 0.0254,
        _ if u.starts_with("millimet") => 0.001,
        _ if u.starts_with("centimet") => 0.01,
        _ if u.starts_with("met") => 1.0,
        _ => return None,
    })
}

/// Every number in the text with its unit scale, in order of appearance. A number
/// followed by a letter that does not form a unit (as in "3rd") is skipped; a bare "in"
/// followed by another word is read as the preposition.
fn quantities(text: &str) -> Vec<(f64, f64, bool)> {
    let mut out = Vec::new();
    for c in number_re().captures_iter(text) {
        let Ok(value) = c["num"].parse::<f64>() else { continue };
        let unit = c.name("unit").map_or("", |m| m.as_str());
        let after = &c["after"];
        let mut scale = unit_scale(unit);
        let mut has_unit = !unit.is_empty();
        if !after.is_empty() {
            if unit.is_empty() {
                continue;
            }
            // "2 minutes", "5 months": the unit match was a prefix of a longer word.
            scale = None;
        }
        if unit.eq_ignore_ascii_case("in") {
            let rest = &text[c.get(0).unwrap().end()..];
            if rest.trim_start().starts_with(|ch: char| ch.is_alphanumeric()) {
                scale = Some(1.0);
                has_unit = false;
            }
        }
        if let Some(s) = scale {
            out.push((value, s, has_unit));
        }
    }
    out
}

/// The final quantity in a response, converted to meters. Bare numbers are meters.
pub fn parse_numeric(text: &str) -> Option<f64> {
    quantities(text).last().map(|(v, s, _)| v * s)
}

/// The last three numbers of a response, as a point or vector. A unit after the final
/// number applies to all three.
pub fn parse_triple(text: &str) -> Option<[f64; 3]> {
    let q = quantities(text);
    if q.len() < 3 {
        return None;
    }
    let last = &q[q.len() - 3..];
    let scale = last[2].1;
    Some([last[0].0 * scale, last[1].0 * scale, last[2].0 * scale])
}

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

/// The final whole number in a response, written in digits or as a word up to twenty.
pub fn parse_count(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    let mut last = None;
    for token in lower.split(|c: char| !c.is_ascii_alphanumeric() && c != '.') {
        let token = token.trim_end_matches('.');
        if let Ok(n) = token.parse::<usize>() {
            last = Some(n);
        } else if let Some(n) = NUMBER_WORDS.iter().position(|w| *w == token) {
            last = Some(n);
        } else if token == "no" || token == "none" {
            last = Some(0);
        }
    }
    last
}

/// Lowercases, drops punctuation other than hyphens and decimal points inside numbers,
/// and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep_dot = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_alphanumeric() || c == '-' || keep_dot {
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// [`normalize_text`] without leading articles and answer prefixes.
pub fn normalize_answer(text: &str) -> String {
    let mut s = normalize_text(text);
    loop {
        let before = s.len();
        for prefix in ["answer ", "the answer is ", "it is ", "it's ", "the ", "a ", "an "] {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.to_string();
            }
        }
        if s.len() == before {
            return s;
        }
    }
}
