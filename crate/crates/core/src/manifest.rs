//! Corpus manifests on disk: a directory holding `manifest.json` plus the
//! embedding blobs it references by `(blob, ordinal)`.
//!
//! Loading is all-or-nothing. Either every invariant of the data model holds
//! for the returned [`CorpusManifest`] or a typed [`ManifestError`] explains
//! the first violation found.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blob::{self, BlobError, EmbeddingBlob};
use crate::model::{
    CorpusManifest, DocumentRecord, EmbeddingRole, EmbeddingVector, EntityAttrs, EntityRecord,
    EntityType, EventAttrs, GeoPoint, ImageFeatures, LocationAttrs, NounEmbedding, PersonAttrs,
    ReferenceImage, ReferenceImageSet, SceneClass, SceneKind, SceneProbabilities,
    SceneVocabulary, DEFAULT_PER_SOURCE_CAP,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Blob(#[from] BlobError),
}

fn integrity(msg: impl Into<String>) -> ManifestError {
    ManifestError::Integrity(msg.into())
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Overrides the manifest's per-source reference cap.
    pub per_source_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorRef {
    pub blob: String,
    pub ordinal: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    format_version: u32,
    corpus_id: String,
    #[serde(default = "default_cap")]
    per_source_cap: usize,
    embedding_dims: BTreeMap<EmbeddingRole, usize>,
    #[serde(default)]
    scene_vocabulary: Vec<SceneClassEntry>,
    entities: Vec<EntityEntry>,
    documents: Vec<DocumentEntry>,
}

fn default_cap() -> usize {
    DEFAULT_PER_SOURCE_CAP
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneClassEntry {
    class_id: String,
    label: String,
    embedding: VectorRef,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityEntry {
    entity_id: String,
    entity_type: EntityType,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    person: Option<PersonAttrs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<LocationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event: Option<EventAttrs>,
    #[serde(default)]
    references: Vec<ReferenceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocationEntry {
    latitude: f64,
    longitude: f64,
    #[serde(default)]
    parent_classes: BTreeSet<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceEntry {
    source: String,
    embedding: VectorRef,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NounEntry {
    noun: String,
    embedding: VectorRef,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentEntry {
    doc_id: String,
    #[serde(default)]
    person_mentions: Vec<String>,
    #[serde(default)]
    location_mentions: Vec<String>,
    #[serde(default)]
    event_mentions: Vec<String>,
    #[serde(default)]
    noun_context: Vec<NounEntry>,
    #[serde(default)]
    face_embeddings: Vec<VectorRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geo_embedding: Option<VectorRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_embedding: Option<VectorRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_similarity_embedding: Option<VectorRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_kind: Option<SceneKind>,
}

/// Resolves `(blob, ordinal)` references, reading each blob file once.
struct BlobResolver<'a> {
    dir: &'a Path,
    dims: &'a BTreeMap<EmbeddingRole, usize>,
    blobs: HashMap<String, EmbeddingBlob>,
}

impl<'a> BlobResolver<'a> {
    fn resolve(
        &mut self,
        r: &VectorRef,
        role: EmbeddingRole,
        context: &str,
    ) -> Result<EmbeddingVector, ManifestError> {
        let expected = *self.dims.get(&role).ok_or_else(|| {
            integrity(format!(
                "{context}: no dimension declared for role {}",
                role.name()
            ))
        })?;
        if r.blob.is_empty()
            || r.blob.contains(['/', '\\'])
            || r.blob == "."
            || r.blob == ".."
        {
            return Err(ManifestError::Malformed(format!(
                "{context}: blob name {:?} must be a plain file name",
                r.blob
            )));
        }
        if !self.blobs.contains_key(&r.blob) {
            let blob = blob::read_embedding_blob(self.dir.join(&r.blob))?;
            self.blobs.insert(r.blob.clone(), blob);
        }
        let blob = &self.blobs[&r.blob];
        if blob.dim() != expected {
            return Err(integrity(format!(
                "{context}: blob {} has dim {}, role {} expects {expected}",
                r.blob,
                blob.dim(),
                role.name()
            )));
        }
        Ok(blob.embedding(r.ordinal)?)
    }
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<CorpusManifest, ManifestError> {
    load_manifest_with(dir, &LoadOptions::default())
}

pub fn load_manifest_with(
    dir: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<CorpusManifest, ManifestError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|source| ManifestError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| ManifestError::Malformed(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(ManifestError::Malformed(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    if let Some((role, _)) = file.embedding_dims.iter().find(|(_, d)| **d == 0) {
        return Err(integrity(format!("role {} has dimension 0", role.name())));
    }
    let cap = options.per_source_cap.unwrap_or(file.per_source_cap);
    if cap == 0 {
        return Err(integrity("per_source_cap must be positive"));
    }

    let mut resolver = BlobResolver {
        dir,
        dims: &file.embedding_dims,
        blobs: HashMap::new(),
    };

    let mut classes = Vec::with_capacity(file.scene_vocabulary.len());
    for entry in &file.scene_vocabulary {
        let embedding = resolver.resolve(
            &entry.embedding,
            EmbeddingRole::Word,
            &format!("scene class {}", entry.class_id),
        )?;
        classes.push(SceneClass {
            class_id: entry.class_id.clone(),
            label: entry.label.clone(),
            embedding,
        });
    }
    let scene_vocabulary = SceneVocabulary::new(classes).map_err(integrity)?;

    let mut entities = BTreeMap::new();
    for entry in &file.entities {
        let record = build_entity(entry, cap, &mut resolver)?;
        if entities.insert(record.entity_id.clone(), record).is_some() {
            return Err(integrity(format!(
                "duplicate entity_id {:?}",
                entry.entity_id
            )));
        }
    }

    let mut documents = BTreeMap::new();
    for entry in &file.documents {
        let doc = build_document(entry, &entities, &scene_vocabulary, &mut resolver)?;
        if documents.insert(doc.doc_id.clone(), doc).is_some() {
            return Err(integrity(format!("duplicate doc_id {:?}", entry.doc_id)));
        }
    }

    Ok(CorpusManifest {
        corpus_id: file.corpus_id,
        entities,
        documents,
        scene_vocabulary,
        embedding_dims: file.embedding_dims,
    })
}

fn build_entity(
    entry: &EntityEntry,
    cap: usize,
    resolver: &mut BlobResolver<'_>,
) -> Result<EntityRecord, ManifestError> {
    let id = &entry.entity_id;
    if id.is_empty() {
        return Err(integrity("empty entity_id"));
    }
    let attrs = match (
        entry.entity_type,
        &entry.person,
        &entry.location,
        &entry.event,
    ) {
        (EntityType::Person, Some(p), None, None) => EntityAttrs::Person(p.clone()),
        (EntityType::Location, None, Some(l), None) => {
            let coordinates = GeoPoint::new(l.latitude, l.longitude)
                .map_err(|e| integrity(format!("entity {id}: {e}")))?;
            EntityAttrs::Location(LocationAttrs {
                coordinates,
                parent_classes: l.parent_classes.clone(),
            })
        }
        (EntityType::Event, None, None, Some(e)) => EntityAttrs::Event(e.clone()),
        (t, ..) => {
            return Err(integrity(format!(
                "entity {id}: attribute blocks must be exactly the {t} block"
            )))
        }
    };
    let role = entry.entity_type.reference_role();
    let mut items = Vec::with_capacity(entry.references.len());
    for (i, r) in entry.references.iter().enumerate() {
        let embedding = resolver.resolve(&r.embedding, role, &format!("entity {id} ref {i}"))?;
        items.push(ReferenceImage {
            source: r.source.clone(),
            embedding,
        });
    }
    let references =
        ReferenceImageSet::new(items, cap).map_err(|e| integrity(format!("entity {id}: {e}")))?;
    Ok(EntityRecord {
        entity_id: id.clone(),
        label: entry.label.clone(),
        attrs,
        references,
    })
}

fn build_document(
    entry: &DocumentEntry,
    entities: &BTreeMap<String, EntityRecord>,
    vocab: &SceneVocabulary,
    resolver: &mut BlobResolver<'_>,
) -> Result<DocumentRecord, ManifestError> {
    let id = &entry.doc_id;
    if id.is_empty() {
        return Err(integrity("empty doc_id"));
    }
    for (entity_type, mentions) in [
        (EntityType::Person, &entry.person_mentions),
        (EntityType::Location, &entry.location_mentions),
        (EntityType::Event, &entry.event_mentions),
    ] {
        for m in mentions {
            match entities.get(m) {
                None => {
                    return Err(integrity(format!(
                        "document {id} mentions unknown entity {m:?}"
                    )))
                }
                Some(e) if e.entity_type() != entity_type => {
                    return Err(integrity(format!(
                        "document {id}: {m:?} is a {} but listed as a {entity_type} mention",
                        e.entity_type()
                    )))
                }
                Some(_) => {}
            }
        }
    }

    let mut noun_context = Vec::with_capacity(entry.noun_context.len());
    for n in &entry.noun_context {
        let embedding = resolver.resolve(
            &n.embedding,
            EmbeddingRole::Word,
            &format!("document {id} noun {:?}", n.noun),
        )?;
        noun_context.push(NounEmbedding {
            noun: n.noun.clone(),
            embedding,
        });
    }
    let mut face_embeddings = Vec::with_capacity(entry.face_embeddings.len());
    for (i, f) in entry.face_embeddings.iter().enumerate() {
        face_embeddings.push(resolver.resolve(
            f,
            EmbeddingRole::Face,
            &format!("document {id} face {i}"),
        )?);
    }
    let mut optional = |r: &Option<VectorRef>, role: EmbeddingRole| {
        r.as_ref()
            .map(|r| resolver.resolve(r, role, &format!("document {id} {}", role.name())))
            .transpose()
    };
    let geo_embedding = optional(&entry.geo_embedding, EmbeddingRole::Geo)?;
    let scene_embedding = optional(&entry.scene_embedding, EmbeddingRole::Scene)?;
    let image_similarity_embedding = optional(
        &entry.image_similarity_embedding,
        EmbeddingRole::ImageSimilarity,
    )?;
    let scene_probabilities = match &entry.scene_probabilities {
        None => None,
        Some(p) => {
            if p.len() != vocab.len() {
                return Err(integrity(format!(
                    "document {id}: {} scene probabilities for {} scene classes",
                    p.len(),
                    vocab.len()
                )));
            }
            Some(
                SceneProbabilities::new(p.clone())
                    .map_err(|e| integrity(format!("document {id}: {e}")))?,
            )
        }
    };
    Ok(DocumentRecord {
        doc_id: id.clone(),
        person_mentions: entry.person_mentions.clone(),
        location_mentions: entry.location_mentions.clone(),
        event_mentions: entry.event_mentions.clone(),
        noun_context,
        image: ImageFeatures {
            face_embeddings,
            geo_embedding,
            scene_embedding,
            scene_probabilities,
            image_similarity_embedding,
            scene_kind: entry.scene_kind,
        },
    })
}

/// Collects vectors per role while the manifest is being serialized.
#[derive(Default)]
struct BlobPacker {
    rows: BTreeMap<EmbeddingRole, Vec<EmbeddingVector>>,
}

impl BlobPacker {
    fn file_name(role: EmbeddingRole) -> String {
        format!("{}.xmec", role.name())
    }

    fn push(&mut self, role: EmbeddingRole, v: &EmbeddingVector) -> VectorRef {
        let rows = self.rows.entry(role).or_default();
        rows.push(v.clone());
        VectorRef {
            blob: Self::file_name(role),
            ordinal: rows.len() as u64 - 1,
        }
    }
}

/// Writes `corpus` to `dir` as `manifest.json` plus one blob per embedding
/// role. Output is byte-for-byte deterministic for a given corpus. Every
/// embedding must be exactly representable in binary32.
pub fn write_manifest(corpus: &CorpusManifest, dir: impl AsRef<Path>) -> Result<PathBuf, ManifestError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ManifestError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut packer = BlobPacker::default();

    let scene_vocabulary = corpus
        .scene_vocabulary
        .classes()
        .iter()
        .map(|c| SceneClassEntry {
            class_id: c.class_id.clone(),
            label: c.label.clone(),
            embedding: packer.push(EmbeddingRole::Word, &c.embedding),
        })
        .collect();

    let mut per_source_cap = DEFAULT_PER_SOURCE_CAP;
    let entities = corpus
        .entities
        .values()
        .map(|e| {
            per_source_cap = per_source_cap.max(e.references.per_source_cap());
            let role = e.entity_type().reference_role();
            let (person, location, event) = match &e.attrs {
                EntityAttrs::Person(p) => (Some(p.clone()), None, None),
                EntityAttrs::Location(l) => (
                    None,
                    Some(LocationEntry {
                        latitude: l.coordinates.lat,
                        longitude: l.coordinates.lon,
                        parent_classes: l.parent_classes.clone(),
                    }),
                    None,
                ),
                EntityAttrs::Event(ev) => (None, None, Some(ev.clone())),
            };
            EntityEntry {
                entity_id: e.entity_id.clone(),
                entity_type: e.entity_type(),
                label: e.label.clone(),
                person,
                location,
                event,
                references: e
                    .references
                    .items()
                    .iter()
                    .map(|r| ReferenceEntry {
                        source: r.source.clone(),
                        embedding: packer.push(role, &r.embedding),
                    })
                    .collect(),
            }
        })
        .collect();

    let documents = corpus
        .documents
        .values()
        .map(|d| {
            let img = &d.image;
            DocumentEntry {
                doc_id: d.doc_id.clone(),
                person_mentions: d.person_mentions.clone(),
                location_mentions: d.location_mentions.clone(),
                event_mentions: d.event_mentions.clone(),
                noun_context: d
                    .noun_context
                    .iter()
                    .map(|n| NounEntry {
                        noun: n.noun.clone(),
                        embedding: packer.push(EmbeddingRole::Word, &n.embedding),
                    })
                    .collect(),
                face_embeddings: img
                    .face_embeddings
                    .iter()
                    .map(|f| packer.push(EmbeddingRole::Face, f))
                    .collect(),
                geo_embedding: img
                    .geo_embedding
                    .as_ref()
                    .map(|v| packer.push(EmbeddingRole::Geo, v)),
                scene_embedding: img
                    .scene_embedding
                    .as_ref()
                    .map(|v| packer.push(EmbeddingRole::Scene, v)),
                scene_probabilities: img.scene_probabilities.as_ref().map(|p| p.values().to_vec()),
                image_similarity_embedding: img
                    .image_similarity_embedding
                    .as_ref()
                    .map(|v| packer.push(EmbeddingRole::ImageSimilarity, v)),
                scene_kind: img.scene_kind,
            }
        })
        .collect();

    let file = ManifestFile {
        format_version: FORMAT_VERSION,
        corpus_id: corpus.corpus_id.clone(),
        per_source_cap,
        embedding_dims: corpus.embedding_dims.clone(),
        scene_vocabulary,
        entities,
        documents,
    };

    for (role, rows) in &packer.rows {
        blob::write_embedding_blob(rows, dir.join(BlobPacker::file_name(*role)))?;
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| ManifestError::Malformed(e.to_string()))?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|source| ManifestError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    Ok(manifest_path)
}

/// Optional dataset-construction filter: drop mentions of entities that occur
/// in fewer than `min_documents[type]` documents. The entity table is kept, so
/// filtered entities remain available as tampering candidates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyFilter {
    pub min_documents: BTreeMap<EntityType, usize>,
}

impl FrequencyFilter {
    pub fn with(mut self, entity_type: EntityType, min_documents: usize) -> Self {
        self.min_documents.insert(entity_type, min_documents);
        self
    }

    pub fn apply(&self, corpus: &CorpusManifest) -> CorpusManifest {
        let mut doc_freq: HashMap<&str, usize> = HashMap::new();
        for doc in corpus.documents.values() {
            for t in EntityType::ALL {
                for id in doc.distinct_mentions(t) {
                    *doc_freq.entry(id).or_default() += 1;
                }
            }
        }
        let keep = |t: EntityType, id: &str| {
            let min = self.min_documents.get(&t).copied().unwrap_or(0);
            doc_freq.get(id).copied().unwrap_or(0) >= min
        };
        let mut out = corpus.clone();
        for doc in out.documents.values_mut() {
            for t in EntityType::ALL {
                doc.mentions_mut(t).retain(|id| keep(t, id));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::write_embedding_blob;
    use serde_json::json;

    fn emb(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    /// One person with one reference, one document mentioning them.
    fn minimal(dir: &Path, doc: serde_json::Value) {
        write_embedding_blob(&[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])], dir.join("face.xmec"))
            .unwrap();
        let manifest = json!({
            "format_version": 1,
            "corpus_id": "mini",
            "embedding_dims": {"face": 2},
            "entities": [{
                "entity_id": "Q1",
                "entity_type": "person",
                "label": "Somebody",
                "person": {"gender": "female", "citizenship": ["DE"]},
                "references": [{"source": "bing", "embedding": {"blob": "face.xmec", "ordinal": 0}}]
            }],
            "documents": [doc]
        });
        fs::write(dir.join(MANIFEST_FILE), manifest.to_string()).unwrap();
    }

    #[test]
    fn minimal_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        minimal(
            dir.path(),
            json!({"doc_id": "d1", "person_mentions": ["Q1"],
                   "face_embeddings": [{"blob": "face.xmec", "ordinal": 1}]}),
        );
        let corpus = load_manifest(dir.path()).unwrap();
        assert_eq!(corpus.documents.len(), 1);
        assert_eq!(corpus.entities["Q1"].references.len(), 1);
        assert_eq!(
            corpus.documents["d1"].image.face_embeddings[0],
            emb(&[0.0, 1.0])
        );
    }

    #[test]
    fn dangling_mention_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        minimal(
            dir.path(),
            json!({"doc_id": "d1", "person_mentions": ["Q999"]}),
        );
        let err = load_manifest(dir.path()).unwrap_err();
        assert!(matches!(err, ManifestError::Integrity(ref m) if m.contains("Q999")), "{err}");
    }

    #[test]
    fn wrong_typed_mention_rejected() {
        let dir = tempfile::tempdir().unwrap();
        minimal(
            dir.path(),
            json!({"doc_id": "d1", "location_mentions": ["Q1"]}),
        );
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Integrity(_))
        ));
    }

    #[test]
    fn syntax_error_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\"format_version\": 1,").unwrap();
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Malformed(_))
        ));
    }

    #[test]
    fn missing_blob_is_blob_error() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path(), json!({"doc_id": "d1"}));
        fs::remove_file(dir.path().join("face.xmec")).unwrap();
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Blob(BlobError::Io { .. }))
        ));
    }

    #[test]
    fn blob_dim_must_match_role() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path(), json!({"doc_id": "d1"}));
        write_embedding_blob(&[emb(&[1.0, 0.0, 0.0])], dir.path().join("face.xmec")).unwrap();
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Integrity(_))
        ));
    }

    #[test]
    fn path_traversal_in_blob_name_rejected() {
        let dir = tempfile::tempdir().unwrap();
        minimal(
            dir.path(),
            json!({"doc_id": "d1", "face_embeddings": [{"blob": "../face.xmec", "ordinal": 0}]}),
        );
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Malformed(_))
        ));
    }

    fn scene_manifest(dir: &Path, probs: serde_json::Value) {
        write_embedding_blob(&[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])], dir.join("word.xmec"))
            .unwrap();
        let manifest = json!({
            "format_version": 1,
            "corpus_id": "scenes",
            "embedding_dims": {"word": 2},
            "scene_vocabulary": [
                {"class_id": "s0", "label": "harbor", "embedding": {"blob": "word.xmec", "ordinal": 0}},
                {"class_id": "s1", "label": "office", "embedding": {"blob": "word.xmec", "ordinal": 1}}
            ],
            "entities": [],
            "documents": [{"doc_id": "d1", "scene_probabilities": probs}]
        });
        fs::write(dir.join(MANIFEST_FILE), manifest.to_string()).unwrap();
    }

    #[test]
    fn probability_sum_boundary() {
        let dir = tempfile::tempdir().unwrap();
        scene_manifest(dir.path(), json!([0.5, 0.48]));
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Integrity(_))
        ));
        scene_manifest(dir.path(), json!([0.5, 0.5000001]));
        assert!(load_manifest(dir.path()).is_ok());
        scene_manifest(dir.path(), json!([0.5, 0.4999999]));
        assert!(load_manifest(dir.path()).is_ok());
        scene_manifest(dir.path(), json!([1.0]));
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Integrity(_))
        ));
    }

    #[test]
    fn source_cap_applies_at_load() {
        let dir = tempfile::tempdir().unwrap();
        write_embedding_blob(&[emb(&[1.0, 0.0])], dir.path().join("face.xmec")).unwrap();
        let refs: Vec<_> = (0..3)
            .map(|_| json!({"source": "google", "embedding": {"blob": "face.xmec", "ordinal": 0}}))
            .collect();
        let manifest = json!({
            "format_version": 1, "corpus_id": "c", "per_source_cap": 2,
            "embedding_dims": {"face": 2},
            "entities": [{"entity_id": "Q1", "entity_type": "person", "label": "x",
                          "person": {"gender": "male", "citizenship": []}, "references": refs}],
            "documents": []
        });
        fs::write(dir.path().join(MANIFEST_FILE), manifest.to_string()).unwrap();
        assert!(matches!(
            load_manifest(dir.path()),
            Err(ManifestError::Integrity(_))
        ));
        let relaxed = LoadOptions {
            per_source_cap: Some(3),
        };
        assert!(load_manifest_with(dir.path(), &relaxed).is_ok());
    }

    #[test]
    fn write_then_load_reproduces_corpus() {
        let dir = tempfile::tempdir().unwrap();
        minimal(
            dir.path(),
            json!({"doc_id": "d1", "person_mentions": ["Q1"],
                   "face_embeddings": [{"blob": "face.xmec", "ordinal": 1}]}),
        );
        let corpus = load_manifest(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_manifest(&corpus, out.path()).unwrap();
        let again = load_manifest(out.path()).unwrap();
        assert_eq!(corpus, again);
        let first = fs::read(out.path().join(MANIFEST_FILE)).unwrap();
        write_manifest(&again, out.path()).unwrap();
        assert_eq!(first, fs::read(out.path().join(MANIFEST_FILE)).unwrap());
    }

    #[test]
    fn frequency_filter_drops_rare_mentions() {
        let dir = tempfile::tempdir().unwrap();
        minimal(
            dir.path(),
            json!({"doc_id": "d1", "person_mentions": ["Q1"]}),
        );
        let corpus = load_manifest(dir.path()).unwrap();
        let kept = FrequencyFilter::default()
            .with(EntityType::Person, 1)
            .apply(&corpus);
        assert_eq!(kept.documents["d1"].person_mentions, vec!["Q1"]);
        let dropped = FrequencyFilter::default()
            .with(EntityType::Person, 2)
            .apply(&corpus);
        assert!(dropped.documents["d1"].person_mentions.is_empty());
        assert!(dropped.entities.contains_key("Q1"));
    }
}
