//! Name-to-factory maps for every backend category.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{
    Captioner, ContourDetector, Embedder, FaceCropper, Inpainter, PoseDetector, Reenactor,
};
use crate::model::EmbeddingKind;

/// Name every built-in synthetic backend is registered under.
pub const SYNTHETIC: &str = "synthetic";

type Factory<T> = Arc<dyn Fn() -> Box<T> + Send + Sync>;
type EmbedderFactory = Arc<dyn Fn(EmbeddingKind) -> Box<dyn Embedder> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendCategory {
    Captioner,
    Inpainter,
    Reenactor,
    PoseDetector,
    ContourDetector,
    FaceCropper,
    Embedder,
}

impl fmt::Display for BackendCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Captioner => "captioner",
            Self::Inpainter => "inpainter",
            Self::Reenactor => "reenactor",
            Self::PoseDetector => "pose-detector",
            Self::ContourDetector => "contour-detector",
            Self::FaceCropper => "face-cropper",
            Self::Embedder => "embedder",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("no {category} backend named `{name}`")]
    UnknownBackend {
        category: BackendCategory,
        name: String,
    },
    #[error("a {category} backend named `{name}` is already registered")]
    DuplicateName {
        category: BackendCategory,
        name: String,
    },
}

/// Backend name per category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSelection {
    pub captioner: String,
    pub inpainter: String,
    pub reenactor: String,
    pub pose_detector: String,
    pub contour_detector: String,
    pub face_cropper: String,
    pub embedder: String,
}

impl Default for BackendSelection {
    fn default() -> Self {
        Self {
            captioner: SYNTHETIC.into(),
            inpainter: SYNTHETIC.into(),
            reenactor: SYNTHETIC.into(),
            pose_detector: SYNTHETIC.into(),
            contour_detector: SYNTHETIC.into(),
            face_cropper: SYNTHETIC.into(),
            embedder: SYNTHETIC.into(),
        }
    }
}

impl BackendSelection {
    pub fn entries(&self) -> [(BackendCategory, &str); 7] {
        [
            (BackendCategory::Captioner, &self.captioner),
            (BackendCategory::Inpainter, &self.inpainter),
            (BackendCategory::Reenactor, &self.reenactor),
            (BackendCategory::PoseDetector, &self.pose_detector),
            (BackendCategory::ContourDetector, &self.contour_detector),
            (BackendCategory::FaceCropper, &self.face_cropper),
            (BackendCategory::Embedder, &self.embedder),
        ]
    }
}

/// Handles for the generation stages of one worker.
pub struct GenerationBackends {
    pub pose_detector: Box<dyn PoseDetector>,
    pub contour_detector: Box<dyn ContourDetector>,
    pub captioner: Box<dyn Captioner>,
    pub inpainter: Box<dyn Inpainter>,
    pub reenactor: Box<dyn Reenactor>,
}

/// Handles for the evaluation stages of one worker.
pub struct EvaluationBackends {
    pub face_cropper: Box<dyn FaceCropper>,
    pub identity_embedder: Box<dyn Embedder>,
    pub expression_embedder: Box<dyn Embedder>,
}

/// Immutable after setup; share it behind an `Arc` or by reference.
#[derive(Default, Clone)]
pub struct BackendRegistry {
    captioners: BTreeMap<String, Factory<dyn Captioner>>,
    inpainters: BTreeMap<String, Factory<dyn Inpainter>>,
    reenactors: BTreeMap<String, Factory<dyn Reenactor>>,
    pose_detectors: BTreeMap<String, Factory<dyn PoseDetector>>,
    contour_detectors: BTreeMap<String, Factory<dyn ContourDetector>>,
    face_croppers: BTreeMap<String, Factory<dyn FaceCropper>>,
    embedders: BTreeMap<String, EmbedderFactory>,
}

fn insert<F>(
    map: &mut BTreeMap<String, F>,
    category: BackendCategory,
    name: &str,
    factory: F,
) -> Result<(), RegistryError> {
    if map.contains_key(name) {
        return Err(RegistryError::DuplicateName {
            category,
            name: name.into(),
        });
    }
    map.insert(name.into(), factory);
    Ok(())
}

fn lookup<'a, F>(
    map: &'a BTreeMap<String, F>,
    category: BackendCategory,
    name: &str,
) -> Result<&'a F, RegistryError> {
    map.get(name).ok_or_else(|| RegistryError::UnknownBackend {
        category,
        name: name.into(),
    })
}

impl fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("captioners", &self.captioners.keys().collect::<Vec<_>>())
            .field("inpainters", &self.inpainters.keys().collect::<Vec<_>>())
            .field("reenactors", &self.reenactors.keys().collect::<Vec<_>>())
            .field(
                "pose_detectors",
                &self.pose_detectors.keys().collect::<Vec<_>>(),
            )
            .field(
                "contour_detectors",
                &self.contour_detectors.keys().collect::<Vec<_>>(),
            )
            .field(
                "face_croppers",
                &self.face_croppers.keys().collect::<Vec<_>>(),
            )
            .field("embedders", &self.embedders.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the synthetic backends registered as `synthetic`.
    pub fn with_builtin() -> Self {
        let mut registry = Self::new();
        crate::synthworld::register(&mut registry)
            .expect("empty registry accepts the synthetic backends");
        registry
    }

    pub fn register_captioner(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn Captioner> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.captioners,
            BackendCategory::Captioner,
            name,
            Arc::new(factory),
        )
    }

    pub fn register_inpainter(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn Inpainter> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.inpainters,
            BackendCategory::Inpainter,
            name,
            Arc::new(factory),
        )
    }

    pub fn register_reenactor(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn Reenactor> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.reenactors,
            BackendCategory::Reenactor,
            name,
            Arc::new(factory),
        )
    }

    pub fn register_pose_detector(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn PoseDetector> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.pose_detectors,
            BackendCategory::PoseDetector,
            name,
            Arc::new(factory),
        )
    }

    pub fn register_contour_detector(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn ContourDetector> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.contour_detectors,
            BackendCategory::ContourDetector,
            name,
            Arc::new(factory),
        )
    }

    pub fn register_face_cropper(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn FaceCropper> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.face_croppers,
            BackendCategory::FaceCropper,
            name,
            Arc::new(factory),
        )
    }

    pub fn register_embedder(
        &mut self,
        name: &str,
        factory: impl Fn(EmbeddingKind) -> Box<dyn Embedder> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        insert(
            &mut self.embedders,
            BackendCategory::Embedder,
            name,
            Arc::new(factory),
        )
    }

    pub fn names(&self, category: BackendCategory) -> Vec<&str> {
        let keys: Box<dyn Iterator<Item = &String>> = match category {
            BackendCategory::Captioner => Box::new(self.captioners.keys()),
            BackendCategory::Inpainter => Box::new(self.inpainters.keys()),
            BackendCategory::Reenactor => Box::new(self.reenactors.keys()),
            BackendCategory::PoseDetector => Box::new(self.pose_detectors.keys()),
            BackendCategory::ContourDetector => Box::new(self.contour_detectors.keys()),
            BackendCategory::FaceCropper => Box::new(self.face_croppers.keys()),
            BackendCategory::Embedder => Box::new(self.embedders.keys()),
        };
        keys.map(String::as_str).collect()
    }

    pub fn contains(&self, category: BackendCategory, name: &str) -> bool {
        self.names(category).contains(&name)
    }

    /// Fails on the first name that is not registered.
    pub fn check(&self, selection: &BackendSelection) -> Result<(), RegistryError> {
        for (category, name) in selection.entries() {
            if !self.contains(category, name) {
                return Err(RegistryError::UnknownBackend {
                    category,
                    name: name.into(),
                });
            }
        }
        Ok(())
    }

    pub fn generation_backends(
        &self,
        selection: &BackendSelection,
    ) -> Result<GenerationBackends, RegistryError> {
        Ok(GenerationBackends {
            pose_detector: lookup(
                &self.pose_detectors,
                BackendCategory::PoseDetector,
                &selection.pose_detector,
            )?(),
            contour_detector: lookup(
                &self.contour_detectors,
                BackendCategory::ContourDetector,
                &selection.contour_detector,
            )?(),
            captioner: lookup(
                &self.captioners,
                BackendCategory::Captioner,
                &selection.captioner,
            )?(),
            inpainter: lookup(
                &self.inpainters,
                BackendCategory::Inpainter,
                &selection.inpainter,
            )?(),
            reenactor: lookup(
                &self.reenactors,
                BackendCategory::Reenactor,
                &selection.reenactor,
            )?(),
        })
    }

    pub fn evaluation_backends(
        &self,
        selection: &BackendSelection,
    ) -> Result<EvaluationBackends, RegistryError> {
        let embedder = lookup(
            &self.embedders,
            BackendCategory::Embedder,
            &selection.embedder,
        )?;
        Ok(EvaluationBackends {
            face_cropper: lookup(
                &self.face_croppers,
                BackendCategory::FaceCropper,
                &selection.face_cropper,
            )?(),
            identity_embedder: embedder(EmbeddingKind::Identity),
            expression_embedder: embedder(EmbeddingKind::Expression),
        })
    }
}
