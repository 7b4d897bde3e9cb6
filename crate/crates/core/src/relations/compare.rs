use serde::{Deserialize, Serialize};

use super::{Guards, RelationError};
use crate::scene::SceneObject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    CameraDistance,
    Width,
    Height,
    Volume,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::CameraDistance,
        Attribute::Width,
        Attribute::Height,
        Attribute::Volume,
    ];
}

pub fn attribute_value(obj: &SceneObject, attribute: Attribute) -> f64 {
    match attribute {
        Attribute::CameraDistance => obj.camera_distance(),
        Attribute::Width => obj.size()[0],
        Attribute::Height => obj.size()[1],
        Attribute::Volume => obj.bbox.volume(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonMode {
    ExtremeMin,
    ExtremeMax,
    FullOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonOutcome {
    Selected(u32),
    /// Ascending by attribute.
    Order(Vec<u32>),
}

/// Whether positive `hi` exceeds `lo` by at least `ratio` of `lo`.
pub fn separated(lo: f64, hi: f64, ratio: f64) -> bool {
    hi > lo && hi >= lo * (1.0 + ratio)
}

/// Extreme selection or full ordering by a shared attribute.
///
/// Extreme modes only need the winner separated from the runner-up; a full order needs
/// every consecutive pair separated.
pub fn relational_comparison(
    objects: &[&SceneObject],
    attribute: Attribute,
    mode: ComparisonMode,
    guards: &Guards,
) -> Result<ComparisonOutcome, RelationError> {
    if objects.len() < 2 {
        return Err(RelationError::NotApplicable("need at least two objects".into()));
    }
    let mut ranked: Vec<(f64, u32)> = objects.iter().map(|o| (attribute_value(o, attribute), o.id)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let gap_ok = |i: usize| separated(ranked[i].0, ranked[i + 1].0, guards.comparison_ratio);
    let n = ranked.len();
    match mode {
        ComparisonMode::ExtremeMin if gap_ok(0) => Ok(ComparisonOutcome::Selected(ranked[0].1)),
        ComparisonMode::ExtremeMax if gap_ok(n - 2) => Ok(ComparisonOutcome::Selected(ranked[n - 1].1)),
        ComparisonMode::FullOrder if (0..n - 1).all(gap_ok) => {
            Ok(ComparisonOutcome::Order(ranked.iter().map(|r| r.1).collect()))
        }
        _ => Err(RelationError::Suppressed(format!(
            "{attribute:?} values closer than {:.0}%",
            guards.comparison_ratio * 100.0
        ))),
    }
}

/// Which way an object faces, as seen by the viewer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Facing {
    /// Facing the camera.
    Front,
    Back,
    Left,
    Right,
}

impl Facing {
    pub const ALL: [Facing; 4] = [Facing::Front, Facing::Left, Facing::Back, Facing::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Facing::Front => "front",
            Facing::Back => "back",
            Facing::Left => "left",
            Facing::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Facing> {
        Facing::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

/// Bins an object's facing yaw to the nearest of front (0), left (90), back (180) and
/// right (270). `Ok(None)` inside the guard band.
pub fn orientation_label(obj: &SceneObject, guards: &Guards) -> Result<Option<Facing>, RelationError> {
    let yaw = obj
        .facing_yaw_deg
        .ok_or_else(|| RelationError::NotApplicable(format!("object {} has no facing", obj.id)))?
        .rem_euclid(360.0);
    let bin = ((yaw / 90.0).round() as usize) % 4;
    let off = (yaw - 90.0 * (yaw / 90.0).round()).abs();
    Ok((off <= guards.orientation_deg).then_some(Facing::ALL[bin]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Consistency {
    Similar,
    Orthogonal,
    Opposite,
}

impl Consistency {
    pub const ALL: [Consistency; 3] = [Consistency::Similar, Consistency::Orthogonal, Consistency::Opposite];

    pub fn as_str(self) -> &'static str {
        match self {
            Consistency::Similar => "similar",
            Consistency::Orthogonal => "orthogonal",
            Consistency::Opposite => "opposite",
        }
    }

    pub fn parse(s: &str) -> Option<Consistency> {
        Consistency::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Relation between two facings from their yaw difference folded to `[0, 180]`.
pub fn orientation_consistency(
    a: &SceneObject,
    b: &SceneObject,
    guards: &Guards,
) -> Result<Option<Consistency>, RelationError> {
    let (Some(ya), Some(yb)) = (a.facing_yaw_deg, b.facing_yaw_deg) else {
        return Err(RelationError::NotApplicable("both objects need a facing".into()));
    };
    let d = (ya - yb).rem_euclid(360.0);
    let delta = d.min(360.0 - d);
    let tol = guards.consistency_deg;
    Ok(if delta <= tol {
        Some(Consistency::Similar)
    } else if (delta - 90.0).abs() <= tol {
        Some(Consistency::Orthogonal)
    } else if delta >= 180.0 - tol {
        Some(Consistency::Opposite)
    } else {
        None
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3D;

    fn obj(id: u32, c: [f64; 3], size: [f64; 3], yaw: Option<f64>) -> SceneObject {
        SceneObject {
            id,
            category: "o".into(),
            bbox: Box3D { center: c, half_extents: size.map(|s| s / 2.0), yaw_deg: 0.0 },
            facing_yaw_deg: yaw,
            bbox2d: None,
        }
    }

    #[test]
    fn nearest_of_three() {
        let objs: Vec<_> = [2.0, 3.0, 5.0].iter().enumerate().map(|(i, &z)| obj(i as u32, [0.0, 0.0, z], [1.0; 3], None)).collect();
        let refs: Vec<_> = objs.iter().collect();
        let g = Guards::default();
        assert_eq!(relational_comparison(&refs, Attribute::CameraDistance, ComparisonMode::ExtremeMin, &g), Ok(ComparisonOutcome::Selected(0)));
        assert_eq!(relational_comparison(&refs, Attribute::CameraDistance, ComparisonMode::ExtremeMax, &g), Ok(ComparisonOutcome::Selected(2)));
        assert_eq!(relational_comparison(&refs, Attribute::CameraDistance, ComparisonMode::FullOrder, &g), Ok(ComparisonOutcome::Order(vec![0, 1, 2])));
        assert!(relational_comparison(&refs[..1], Attribute::CameraDistance, ComparisonMode::FullOrder, &g).is_err());
    }

    #[test]
    fn close_heights_are_suppressed() {
        let a = obj(0, [0.0, 0.0, 2.0], [1.0, 1.0, 1.0], None);
        let b = obj(1, [1.0, 0.0, 2.0], [1.0, 1.05, 1.0], None);
        let g = Guards::default();
        for mode in [ComparisonMode::ExtremeMin, ComparisonMode::ExtremeMax, ComparisonMode::FullOrder] {
            assert!(matches!(relational_comparison(&[&a, &b], Attribute::Height, mode, &g), Err(RelationError::Suppressed(_))));
        }
        assert!(separated(1.0, 1.1, 0.1));
        assert!(!separated(1.0, 1.0999, 0.1));
    }

    #[test]
    fn facing_bins() {
        let g = Guards::default();
        let f = |y: f64| orientation_label(&obj(0, [0.0; 3], [1.0; 3], Some(y)), &g).unwrap();
        assert_eq!(f(0.0), Some(Facing::Front));
        assert_eq!(f(90.0), Some(Facing::Left));
        assert_eq!(f(-88.0), Some(Facing::Right));
        assert_eq!(f(200.0), Some(Facing::Back));
        assert_eq!(f(45.0), None);
        assert_eq!(f(30.0), Some(Facing::Front));
        assert_eq!(f(31.0), None);
        assert!(orientation_label(&obj(0, [0.0; 3], [1.0; 3], None), &g).is_err());
    }

    #[test]
    fn consistency() {
        let g = Guards::default();
        let c = |a: f64, b: f64| {
            orientation_consistency(&obj(0, [0.0; 3], [1.0; 3], Some(a)), &obj(1, [0.0; 3], [1.0; 3], Some(b)), &g).unwrap()
        };
        assert_eq!(c(10.0, 10.0), Some(Consistency::Similar));
        assert_eq!(c(350.0, 5.0), Some(Consistency::Similar));
        assert_eq!(c(0.0, 90.0), Some(Consistency::Orthogonal));
        assert_eq!(c(0.0, 270.0), Some(Consistency::Orthogonal));
        assert_eq!(c(0.0, 180.0), Some(Consistency::Opposite));
        assert_eq!(c(0.0, 45.0), None);
    }
}
