//! Frozen encoder outputs: per-dialogue token matrices and dialogue vectors,
//! plus per-object name-token matrices.
//!
//! Each matrix lives in its own file: the magic `EPCR`, then `u32` version,
//! row count and width (all little-endian), then `rows × dim` little-endian
//! `f32` values, row-major. A `manifest.json` in the store directory indexes
//! the files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, ObjectPool};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EPCR";
pub const EMBEDDING_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn encode_embedding(m: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * m.len());
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 16 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("missing EPCR header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (version, rows, dim) = (word(4), word(8) as usize, word(12) as usize);
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("embedding file version {version}")));
    }
    let expected = 16 + 4 * rows * dim;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{} bytes for {rows}×{dim} embeddings (expected {expected})",
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::from_vec(rows, dim, values)
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embedding(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_embedding_file(path: impl AsRef<Path>, m: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embedding(m)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    pub dialogues: Vec<DialogueEntry>,
    pub objects: Vec<ObjectEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueEntry {
    pub id: String,
    /// Token matrix file, relative to the manifest directory.
    pub tokens: String,
    /// Single-row dialogue vector file.
    pub vector: String,
    pub n_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: String,
    pub path: String,
    pub n_rows: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DialogueEmbeddings {
    /// One row per dialogue token.
    pub tokens: Tensor<f32>,
    /// The dialogue vector, `1 × dim`.
    pub vector: Tensor<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    dialogues: HashMap<String, DialogueEmbeddings>,
    objects: HashMap<String, Tensor<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert_dialogue(&mut self, id: &str, emb: DialogueEmbeddings) -> Result<()> {
        if emb.tokens.cols() != self.dim || emb.vector.shape() != [1, self.dim] {
            return Err(Error::Validation(format!(
                "dialogue {id}: embedding widths {:?}/{:?} do not match dim {}",
                emb.tokens.shape(),
                emb.vector.shape(),
                self.dim
            )));
        }
        self.dialogues.insert(id.to_string(), emb);
        Ok(())
    }

    pub fn insert_object(&mut self, id: &str, names: Tensor<f32>) -> Result<()> {
        if names.cols() != self.dim || names.rows() == 0 {
            return Err(Error::Validation(format!(
                "object {id}: name embeddings {:?} for dim {}",
                names.shape(),
                self.dim
            )));
        }
        self.objects.insert(id.to_string(), names);
        Ok(())
    }

    pub fn dialogue(&self, id: &str) -> Result<&DialogueEmbeddings> {
        self.dialogues
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no embeddings for dialogue {id}")))
    }

    pub fn object(&self, id: &str) -> Result<&Tensor<f32>> {
        self.objects
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no name embeddings for object {id:?}")))
    }

    pub fn n_dialogues(&self) -> usize {
        self.dialogues.len()
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    /// Reads `dir/manifest.json` and every file it lists.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: mpath.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut store = EmbeddingStore::new(manifest.dim);
        for e in &manifest.dialogues {
            let read = |rel: &str| {
                read_embedding_file(dir.join(rel)).map_err(|err| {
                    Error::Validation(format!("dialogue {}: embedding file {rel}: {err}", e.id))
                })
            };
            let tokens = read(&e.tokens)?;
            let vector = read(&e.vector)?;
            if tokens.rows() != e.n_rows {
                return Err(Error::Validation(format!(
                    "dialogue {}: manifest lists {} rows, file has {}",
                    e.id,
                    e.n_rows,
                    tokens.rows()
                )));
            }
            if vector.rows() != 1 {
                return Err(Error::Validation(format!(
                    "dialogue {}: dialogue vector has {} rows",
                    e.id,
                    vector.rows()
                )));
            }
            store.insert_dialogue(&e.id, DialogueEmbeddings { tokens, vector })?;
        }
        for o in &manifest.objects {
            let m = read_embedding_file(dir.join(&o.path)).map_err(|err| {
                Error::Validation(format!("object {:?}: embedding file {}: {err}", o.id, o.path))
            })?;
            if m.rows() != o.n_rows || m.cols() != o.dim {
                return Err(Error::Validation(format!(
                    "object {:?}: manifest says {}×{}, file has {:?}",
                    o.id,
                    o.n_rows,
                    o.dim,
                    m.shape()
                )));
            }
            store.insert_object(&o.id, m)?;
        }
        Ok(store)
    }

    /// Writes every matrix plus a manifest under `dir`. Dialogue and object
    /// files are named by position so ids never need escaping.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Manifest> {
        let dir = dir.as_ref();
        for sub in ["dialogues", "objects"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut ids: Vec<&String> = self.dialogues.keys().collect();
        ids.sort();
        let mut dialogues = Vec::with_capacity(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let emb = &self.dialogues[id];
            let tokens = format!("dialogues/{i:06}.tokens.bin");
            let vector = format!("dialogues/{i:06}.vector.bin");
            write_embedding_file(dir.join(&tokens), &emb.tokens)?;
            write_embedding_file(dir.join(&vector), &emb.vector)?;
            dialogues.push(DialogueEntry {
                id: id.clone(),
                tokens,
                vector,
                n_rows: emb.tokens.rows(),
            });
        }
        let mut oids: Vec<&String> = self.objects.keys().collect();
        oids.sort();
        let mut objects = Vec::with_capacity(oids.len());
        for (i, id) in oids.into_iter().enumerate() {
            let m = &self.objects[id];
            let path = format!("objects/{i:04}.bin");
            write_embedding_file(dir.join(&path), m)?;
            objects.push(ObjectEntry {
                id: id.clone(),
                path,
                n_rows: m.rows(),
                dim: m.cols(),
            });
        }
        let manifest = Manifest {
            dim: self.dim,
            dialogues,
            objects,
        };
        let mpath: PathBuf = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
        Ok(manifest)
    }

    /// Cross-checks coverage and row counts against a corpus and pool.
    pub fn check_corpus(&self, dialogues: &[Dialogue], pool: &ObjectPool) -> Result<()> {
        for d in dialogues {
            let e = self.dialogue(&d.id)?;
            if e.tokens.rows() != d.tokens.len() {
                return Err(Error::Validation(format!(
                    "dialogue {}: {} embedding rows for {} tokens",
                    d.id,
                    e.tokens.rows(),
                    d.tokens.len()
                )));
            }
        }
        for c in pool.categories() {
            self.object(&c.id)?;
        }
        Ok(())
    }
}
