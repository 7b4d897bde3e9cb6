use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Pixel-level statistics computed upstream from the RGB image and depth validity.
///
/// "Pure" white/black means every channel equals 255 (resp. 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelStats {
    pub white: f64,
    pub black: f64,
    pub invalid_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    /// Discard when the summed pure white + pure black fraction exceeds this.
    pub pure_pixel_max: f64,
    /// Discard when the invalid-depth fraction exceeds this.
    pub invalid_depth_max: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            pure_pixel_max: 0.35,
            invalid_depth_max: 0.50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterReason {
    PurePixels,
    InvalidDepth,
    TagVote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub keep: bool,
    pub reasons: Vec<FilterReason>,
}

impl FilterDecision {
    fn from_reasons(reasons: Vec<FilterReason>) -> Self {
        FilterDecision {
            keep: reasons.is_empty(),
            reasons,
        }
    }
}

pub fn heuristic_image_filter(stats: &PixelStats, thresholds: &FilterThresholds) -> FilterDecision {
    let mut reasons = Vec::new();
    if stats.white + stats.black > thresholds.pure_pixel_max {
        reasons.push(FilterReason::PurePixels);
    }
    if stats.invalid_depth > thresholds.invalid_depth_max {
        reasons.push(FilterReason::InvalidDepth);
    }
    FilterDecision::from_reasons(reasons)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TagVoteError {
    #[error("expected exactly 5 retrieved tags, got {0}")]
    TagCount(usize),
    #[error("tag {0:?} is in both the include and the exclude set")]
    OverlappingSets(String),
}

/// Keeps an image when strictly more than half of its five retrieved tags are in the
/// include set. Tags in neither set count against the image.
pub fn tag_vote_filter(
    tags: &[String],
    include: &BTreeSet<String>,
    exclude: &BTreeSet<String>,
) -> Result<FilterDecision, TagVoteError> {
    if tags.len() != 5 {
        return Err(TagVoteError::TagCount(tags.len()));
    }
    if let Some(t) = include.intersection(exclude).next() {
        return Err(TagVoteError::OverlappingSets(t.clone()));
    }
    let votes = tags.iter().filter(|t| include.contains(*t)).count();
    let reasons = if 2 * votes > tags.len() {
        vec![]
    } else {
        vec![FilterReason::TagVote]
    };
    Ok(FilterDecision::from_reasons(reasons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(white: f64, black: f64, invalid_depth: f64) -> PixelStats {
        PixelStats {
            white,
            black,
            invalid_depth,
        }
    }

    #[test]
    fn pure_pixel_rule() {
        let d = heuristic_image_filter(&stats(0.40, 0.0, 0.1), &FilterThresholds::default());
        assert!(!d.keep);
        assert_eq!(d.reasons, vec![FilterReason::PurePixels]);
    }

    #[test]
    fn clean_image_is_kept() {
        let d = heuristic_image_filter(&stats(0.0, 0.0, 0.0), &FilterThresholds::default());
        assert!(d.keep);
        assert!(d.reasons.is_empty());
    }

    #[test]
    fn invalid_depth_rule() {
        let d = heuristic_image_filter(&stats(0.10, 0.10, 0.51), &FilterThresholds::default());
        assert_eq!(d.reasons, vec![FilterReason::InvalidDepth]);
    }

    #[test]
    fn thresholds_are_strict() {
        let d = heuristic_image_filter(&stats(0.20, 0.15, 0.50), &FilterThresholds::default());
        assert!(d.keep);
    }

    fn sets() -> (BTreeSet<String>, BTreeSet<String>) {
        let inc = ["photo", "indoor", "room", "street", "kitchen"];
        let exc = ["chart", "screenshot", "diagram", "logo", "text"];
        (
            inc.iter().map(|s| s.to_string()).collect(),
            exc.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn tags(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tag_votes() {
        let (inc, exc) = sets();
        let keep = tag_vote_filter(&tags(&["photo", "room", "indoor", "chart", "logo"]), &inc, &exc);
        assert!(keep.unwrap().keep);
        let drop = tag_vote_filter(&tags(&["photo", "room", "text", "chart", "logo"]), &inc, &exc);
        assert!(!drop.unwrap().keep);
        let all = tag_vote_filter(&tags(&["photo", "room", "indoor", "street", "kitchen"]), &inc, &exc);
        assert!(all.unwrap().keep);
        let unknown = tag_vote_filter(&tags(&["photo", "room", "??", "!!", "logo"]), &inc, &exc);
        assert!(!unknown.unwrap().keep);
    }

    #[test]
    fn tag_preconditions() {
        let (inc, exc) = sets();
        assert_eq!(
            tag_vote_filter(&tags(&["photo"]), &inc, &exc),
            Err(TagVoteError::TagCount(1))
        );
        let mut bad = exc.clone();
        bad.insert("photo".into());
        assert!(matches!(
            tag_vote_filter(&tags(&["photo"; 5]), &inc, &bad),
            Err(TagVoteError::OverlappingSets(_))
        ));
    }

    proptest! {
        #[test]
        fn filter_is_monotone(
            w in 0.0f64..1.0, b in 0.0f64..1.0, i in 0.0f64..1.0,
            dw in 0.0f64..0.5, db in 0.0f64..0.5, di in 0.0f64..0.5,
        ) {
            let t = FilterThresholds::default();
            let before = heuristic_image_filter(&stats(w, b, i), &t);
            let after = heuristic_image_filter(&stats(w + dw, b + db, i + di), &t);
            prop_assert!(before.keep || !after.keep);
        }

        #[test]
        fn tag_vote_ignores_order(mask in proptest::collection::vec(any::<bool>(), 5), rot in 0usize..5) {
            let (inc, exc) = sets();
            let incv: Vec<_> = inc.iter().cloned().collect();
            let excv: Vec<_> = exc.iter().cloned().collect();
            let t: Vec<String> = mask.iter().enumerate()
                .map(|(k, &m)| if m { incv[k].clone() } else { excv[k].clone() })
                .collect();
            let mut r = t.clone();
            r.rotate_left(rot);
            r.reverse();
            prop_assert_eq!(tag_vote_filter(&t, &inc, &exc), tag_vote_filter(&r, &inc, &exc));
        }
    }
}
