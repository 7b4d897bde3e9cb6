//! Synthesis of hierarchical 3D spatial VQA corpora from metric point maps.
//!
//! The crate is organized bottom-up:
//!
//! - [`formats`]: PMAP point maps, masks, JSON-lines manifests, image filters.
//! - [`geometry`]: pinhole backprojection, object clouds, DBSCAN, gravity frames, box fitting.
//! - [`relations`]: the geometric quantities behind every task family.
//! - [`references`]: unique object designators and Hungarian label transfer.
//! - [`qa`]: question/answer synthesis in free-form, multiple-choice and true/false formats.
//! - [`eval`]: scoring rules and accuracy reports.
//! - [`oracle`]: synthetic ground-truth scenes used to check the whole pipeline.
//! - [`encoding`]: point-map encoding numerics (sinusoidal encoding, patchify, fusion).
//!
//! Conventions: camera frame is +x right, +y down, +z forward; lengths are meters and
//! angles are degrees unless a name says otherwise.

pub mod encoding;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod oracle;
pub mod qa;
pub mod references;
pub mod relations;
pub mod scene;
pub mod seed;
