//! Video face de-identification by generating a de-identified twin of the
//! most frontal source frame and re-enacting it with the source motion.
//!
//! Models are consumed through backend traits ([`generation`]). The
//! [`synthworld`] backend implements every trait over a parametric avatar
//! world whose latents can be decoded exactly from pixels, which is what
//! the test suites evaluate against.

pub mod evaluation;
pub mod generation;
pub mod media;
pub mod model;
pub mod pipeline;
pub mod source_prep;
pub mod synthworld;
