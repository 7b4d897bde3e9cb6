//! Surface text for reference specs, and the inverse parser.

use std::sync::OnceLock;

use regex::Regex;

use super::{LineSide, PositionKey, ReferenceSpec, SizeKey};

const ORDINALS: [&str; 10] = ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"];

/// English ordinal for `n >= 1`: "first" through "tenth", then "11th", "21st", ...
pub fn ordinal(n: usize) -> String {
    if (1..=10).contains(&n) {
        return ORDINALS[n - 1].to_string();
    }
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn parse_ordinal(s: &str) -> Option<usize> {
    if let Some(k) = ORDINALS.iter().position(|o| *o == s) {
        return Some(k + 1);
    }
    let digits = s.trim_end_matches(|c: char| c.is_ascii_alphabetic());
    let n: usize = digits.parse().ok()?;
    (n >= 1 && ordinal(n) == s).then_some(n)
}

fn side_word(side: LineSide) -> &'static str {
    match side {
        LineSide::Left => "left",
        LineSide::Top => "top",
        LineSide::Front => "front",
    }
}

/// (low-end superlative, high-end superlative, low-end comparative, high-end comparative)
fn size_words(key: SizeKey) -> [&'static str; 4] {
    match key {
        SizeKey::Width => ["narrowest", "widest", "narrower", "wider"],
        SizeKey::Height => ["shortest", "tallest", "shorter", "taller"],
        SizeKey::Volume => ["smallest", "largest", "smaller", "larger"],
    }
}

pub fn render(spec: &ReferenceSpec) -> String {
    match spec {
        ReferenceSpec::Textual { text } => text.clone(),
        ReferenceSpec::Category { category } => format!("the {category}"),
        ReferenceSpec::LinearOrder { category, side, rank } => {
            format!("the {} {category} from the {} in the row", ordinal(rank + 1), side_word(*side))
        }
        ReferenceSpec::BoxFallback { category, color } => format!("the {category} (highlighted by {color} box)"),
        ReferenceSpec::Positional { category: c, key, rank, from_high, pair } => {
            let ord = ordinal(rank + 1);
            match (key, from_high, pair, rank) {
                (PositionKey::Horizontal, false, true, _) => format!("the {c} on the left"),
                (PositionKey::Horizontal, true, true, _) => format!("the {c} on the right"),
                (PositionKey::Horizontal, false, false, 0) => format!("the leftmost {c}"),
                (PositionKey::Horizontal, true, false, 0) => format!("the rightmost {c}"),
                (PositionKey::Horizontal, false, false, _) => format!("the {ord} {c} from the left"),
                (PositionKey::Horizontal, true, false, _) => format!("the {ord} {c} from the right"),
                (PositionKey::Vertical, false, true, _) => format!("the upper {c}"),
                (PositionKey::Vertical, true, true, _) => format!("the lower {c}"),
                (PositionKey::Vertical, false, false, 0) => format!("the highest {c}"),
                (PositionKey::Vertical, true, false, 0) => format!("the lowest {c}"),
                (PositionKey::Vertical, false, false, _) => format!("the {ord} highest {c}"),
                (PositionKey::Vertical, true, false, _) => format!("the {ord} lowest {c}"),
                (PositionKey::CameraDistance, false, true, _) => format!("the closer {c}"),
                (PositionKey::CameraDistance, true, true, _) => format!("the farther {c}"),
                (PositionKey::CameraDistance, false, false, 0) => format!("the closest {c} to the camera"),
                (PositionKey::CameraDistance, true, false, 0) => format!("the farthest {c} from the camera"),
                (PositionKey::CameraDistance, false, false, _) => format!("the {ord} closest {c} to the camera"),
                (PositionKey::CameraDistance, true, false, _) => format!("the {ord} farthest {c} from the camera"),
            }
        }
        ReferenceSpec::SizeComparison { category: c, key, rank, from_high, pair } => {
            let w = size_words(*key);
            let word = match (pair, from_high) {
                (true, false) => w[2],
                (true, true) => w[3],
                (false, false) => w[0],
                (false, true) => w[1],
            };
            if *rank == 0 {
                format!("the {word} {c}")
            } else {
                format!("the {} {word} {c}", ordinal(rank + 1))
            }
        }
    }
}

struct Patterns {
    fallback: Regex,
    linear: Regex,
    horizontal_pair: Regex,
    extreme: Regex,
    from_side: Regex,
    ranked_word: Regex,
    camera: Regex,
    category: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        fallback: Regex::new(r"^the (.+) \(highlighted by (.+) box\)$").unwrap(),
        linear: Regex::new(r"^the (\w+) (.+) from the (left|top|front) in the row$").unwrap(),
        horizontal_pair: Regex::new(r"^the (.+) on the (left|right)$").unwrap(),
        extreme: Regex::new(r"^the (leftmost|rightmost) (.+)$").unwrap(),
        from_side: Regex::new(r"^the (\w+) (.+) from the (left|right)$").unwrap(),
        camera: Regex::new(r"^the (?:(\w+) )?(closest|farthest) (.+) (?:to|from) the camera$").unwrap(),
        ranked_word: Regex::new(
            r"^the (?:(\w+) )?(highest|lowest|upper|lower|closer|farther|narrowest|widest|narrower|wider|shortest|tallest|shorter|taller|smallest|largest|smaller|larger) (.+)$",
        )
        .unwrap(),
        category: Regex::new(r"^the (.+)$").unwrap(),
    })
}

/// Inverse of [`render`] for every spatial kind. Captions are not parsed.
pub fn parse_reference(text: &str) -> Option<ReferenceSpec> {
    let p = patterns();
    let s = text.trim();
    if let Some(c) = p.fallback.captures(s) {
        return Some(ReferenceSpec::BoxFallback { category: c[1].into(), color: c[2].into() });
    }
    if let Some(c) = p.linear.captures(s) {
        let side = match &c[3] {
            "left" => LineSide::Left,
            "top" => LineSide::Top,
            _ => LineSide::Front,
        };
        return Some(ReferenceSpec::LinearOrder { category: c[2].into(), side, rank: parse_ordinal(&c[1])? - 1 });
    }
    if let Some(c) = p.camera.captures(s) {
        let rank = match c.get(1) {
            Some(m) => parse_ordinal(m.as_str())? - 1,
            None => 0,
        };
        return Some(ReferenceSpec::Positional {
            category: c[3].into(),
            key: PositionKey::CameraDistance,
            rank,
            from_high: &c[2] == "farthest",
            pair: false,
        });
    }
    if let Some(c) = p.from_side.captures(s) {
        if let Some(n) = parse_ordinal(&c[1]) {
            return Some(ReferenceSpec::Positional {
                category: c[2].into(),
                key: PositionKey::Horizontal,
                rank: n - 1,
                from_high: &c[3] == "right",
                pair: false,
            });
        }
    }
    if let Some(c) = p.horizontal_pair.captures(s) {
        return Some(ReferenceSpec::Positional {
            category: c[1].into(),
            key: PositionKey::Horizontal,
            rank: 0,
            from_high: &c[2] == "right",
            pair: true,
        });
    }
    if let Some(c) = p.extreme.captures(s) {
        return Some(ReferenceSpec::Positional {
            category: c[2].into(),
            key: PositionKey::Horizontal,
            rank: 0,
            from_high: &c[1] == "rightmost",
            pair: false,
        });
    }
    if let Some(c) = p.ranked_word.captures(s) {
        let rank = match c.get(1) {
            Some(m) => parse_ordinal(m.as_str())? - 1,
            None => 0,
        };
        let category = c[3].to_string();
        let word = &c[2];
        let positional = |key, from_high, pair| ReferenceSpec::Positional { category: category.clone(), key, rank, from_high, pair };
        let sized = |key, from_high, pair| ReferenceSpec::SizeComparison { category: category.clone(), key, rank, from_high, pair };
        let spec = match word {
            "highest" => positional(PositionKey::Vertical, false, false),
            "lowest" => positional(PositionKey::Vertical, true, false),
            "upper" => positional(PositionKey::Vertical, false, true),
            "lower" => positional(PositionKey::Vertical, true, true),
            "closer" => positional(PositionKey::CameraDistance, false, true),
            "farther" => positional(PositionKey::CameraDistance, true, true),
            _ => {
                let key = [SizeKey::Width, SizeKey::Height, SizeKey::Volume]
                    .into_iter()
                    .find(|k| size_words(*k).contains(&word))?;
                let idx = size_words(key).iter().position(|w| *w == word)?;
                sized(key, idx % 2 == 1, idx >= 2)
            }
        };
        return Some(spec);
    }
    p.category.captures(s).map(|c| ReferenceSpec::Category { category: c[1].into() })
}
