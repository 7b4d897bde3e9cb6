use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FormatError, PixelStats};
use crate::geometry::{Box3D, CameraIntrinsics};

/// One image of a manifest (one JSON object per line).
///
/// Paths are relative to the directory holding the manifest unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageManifest {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// PMAP file. When absent the depth-estimator client is asked for one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointmap: Option<String>,
    /// RGB image path, forwarded to clients; never decoded here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    /// Unit gravity direction in the camera frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_stats: Option<PixelStats>,
    /// Top-5 tags from an embedding retrieval, most similar first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved_tags: Option<Vec<String>>,
    #[serde(default)]
    pub objects: Vec<ObjectAnnotation>,
    /// Category-aware 2D detections used to label class-agnostic objects.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectAnnotation {
    pub id: u32,
    pub category: String,
    /// Pixel box `[x0, y0, x1, y1]`.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// Facing yaw about gravity from an orientation estimator or annotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_deg: Option<f64>,
    /// Ground-truth 3D box; when present, box estimation is skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box3d: Option<Box3D>,
    /// Candidate textual references, simplest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub captions: Vec<CaptionCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionCandidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<Grounding>,
}

/// Result of grounding a caption back into the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grounding {
    pub boxes: Vec<[f64; 4]>,
    /// IoU between the mask segmented from the single grounded box and the object's mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub category: String,
    pub bbox: [f64; 4],
}

impl ImageManifest {
    pub fn resolve(base: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Schema violations for this image; `base` is the manifest directory.
    pub fn violations(&self, base: &Path) -> Vec<String> {
        let mut out = Vec::new();
        if self.image_id.is_empty() {
            out.push("empty image_id".to_string());
        }
        if self.width == 0 || self.height == 0 {
            out.push(format!("empty image {}x{}", self.width, self.height));
        }
        let check_path = |field: &str, rel: &Option<String>, out: &mut Vec<String>| {
            if let Some(rel) = rel {
                if !Self::resolve(base, rel).is_file() {
                    out.push(format!("{field} path {rel:?} does not resolve"));
                }
            }
        };
        check_path("pointmap", &self.pointmap, &mut out);
        check_path("image", &self.image, &mut out);
        if self.pointmap.is_none() && self.image.is_none() {
            out.push("neither pointmap nor image given".to_string());
        }
        if let Some(k) = &self.intrinsics {
            if let Err(e) = k.validate(self.width, self.height) {
                out.push(e.to_string());
            }
        }
        if let Some(g) = self.gravity {
            let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
                out.push(format!("gravity {g:?} is not a unit vector (norm {norm})"));
            }
        }
        if let Some(s) = &self.pixel_stats {
            for (name, f) in [("white", s.white), ("black", s.black), ("invalid_depth", s.invalid_depth)] {
                if !(0.0..=1.0).contains(&f) {
                    out.push(format!("pixel_stats.{name} = {f} outside [0, 1]"));
                }
            }
        }
        if let Some(tags) = &self.retrieved_tags {
            if tags.len() != 5 {
                out.push(format!("retrieved_tags has {} entries, expected 5", tags.len()));
            }
        }
        let mut ids = HashSet::new();
        for obj in &self.objects {
            let who = format!("object {}", obj.id);
            if !ids.insert(obj.id) {
                out.push(format!("{who}: duplicate id"));
            }
            if obj.category.trim().is_empty() {
                out.push(format!("{who}: empty category"));
            }
            if let Some(e) = self.box_violation(&obj.bbox) {
                out.push(format!("{who}: bbox {e}"));
            }
            check_path(&format!("{who} mask"), &obj.mask, &mut out);
            if obj.yaw_deg.is_some_and(|y| !y.is_finite()) {
                out.push(format!("{who}: non-finite yaw"));
            }
            if let Some(b) = &obj.box3d {
                if let Err(e) = b.validate() {
                    out.push(format!("{who}: box3d {e}"));
                }
            }
            for c in &obj.captions {
                if c.text.trim().is_empty() {
                    out.push(format!("{who}: empty caption"));
                }
                if let Some(g) = &c.grounding {
                    if g.mask_iou.is_some_and(|x| !(0.0..=1.0).contains(&x)) {
                        out.push(format!("{who}: caption mask_iou outside [0, 1]"));
                    }
                    for b in &g.boxes {
                        if let Some(e) = self.box_violation(b) {
                            out.push(format!("{who}: grounded box {e}"));
                        }
                    }
                }
            }
        }
        for (k, d) in self.detections.iter().enumerate() {
            if let Some(e) = self.box_violation(&d.bbox) {
                out.push(format!("detection {k}: bbox {e}"));
            }
        }
        out
    }

    fn box_violation(&self, b: &[f64; 4]) -> Option<String> {
        let (w, h) = (self.width as f64, self.height as f64);
        let ok = b.iter().all(|c| c.is_finite())
            && 0.0 <= b[0]
            && b[0] < b[2]
            && b[2] <= w
            && 0.0 <= b[1]
            && b[1] < b[3]
            && b[3] <= h;
        (!ok).then(|| format!("{b:?} is empty or outside the {w}x{h} image"))
    }
}

/// Parses every line of a manifest; stops at the first malformed line.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ImageManifest>, FormatError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let image = serde_json::from_str(&line).map_err(|e| FormatError::Manifest {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(image);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, images: &[ImageManifest]) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for image in images {
        serde_json::to_writer(&mut buf, image).expect("manifest serializes");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    f.write_all(&buf).map_err(|e| FormatError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub line: usize,
    pub image_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestReport {
    pub images: usize,
    pub violations: Vec<Violation>,
}

impl ManifestReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every line of a manifest and collects all schema violations.
pub fn validate_manifest(path: impl AsRef<Path>) -> Result<ManifestReport, FormatError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let mut report = ManifestReport::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.images += 1;
        match serde_json::from_str::<ImageManifest>(line) {
            Err(e) => report.violations.push(Violation {
                line: i + 1,
                image_id: None,
                message: e.to_string(),
            }),
            Ok(image) => {
                if !seen.insert(image.image_id.clone()) {
                    report.violations.push(Violation {
                        line: i + 1,
                        image_id: Some(image.image_id.clone()),
                        message: "duplicate image_id".into(),
                    });
                }
                for message in image.violations(base) {
                    report.violations.push(Violation {
                        line: i + 1,
                        image_id: Some(image.image_id.clone()),
                        message,
                    });
                }
            }
        }
    }
    Ok(report)
}
