use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dialogue::{normalize_id, Dialogue};
use crate::error::{Error, Result};

/// One external object category. Relatives are canonical pool indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectCategory {
    pub id: String,
    pub surface_name: String,
    pub synonyms: BTreeSet<usize>,
    pub hypernyms: BTreeSet<usize>,
    pub hyponyms: BTreeSet<usize>,
    pub train_frequency: usize,
}

/// Candidate set of out-of-text referents, in canonical (lexicographic id) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPool {
    categories: Vec<ObjectCategory>,
    index: HashMap<String, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PoolLoadReport {
    /// Relative names that matched no pool category.
    pub dropped_relatives: usize,
    /// Relative lists that named the category itself.
    pub dropped_self_references: usize,
}

/// On-disk pool layout; relatives are given by id.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PoolSpec {
    pub categories: Vec<CategorySpec>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CategorySpec {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub hypernyms: Vec<String>,
    #[serde(default)]
    pub hyponyms: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyBucket {
    Frequent,
    Infrequent,
}

pub fn load_object_pool(path: impl AsRef<Path>) -> Result<(ObjectPool, PoolLoadReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: PoolSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    ObjectPool::from_spec(raw)
}

impl ObjectPool {
    pub fn from_spec(raw: PoolSpec) -> Result<(Self, PoolLoadReport)> {
        if raw.categories.is_empty() {
            return Err(Error::Validation("object pool is empty".into()));
        }
        let mut raw = raw.categories;
        for c in &mut raw {
            c.id = normalize_id(&c.id);
        }
        raw.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = raw.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Validation(format!("duplicate object id {:?}", w[0].id)));
        }
        let index: HashMap<String, usize> =
            raw.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();

        let mut report = PoolLoadReport::default();
        let mut resolve = |own: usize, names: &[String]| -> BTreeSet<usize> {
            let mut out = BTreeSet::new();
            for n in names {
                match index.get(&normalize_id(n)) {
                    Some(&i) if i == own => report.dropped_self_references += 1,
                    Some(&i) => {
                        out.insert(i);
                    }
                    None => report.dropped_relatives += 1,
                }
            }
            out
        };
        let categories = raw
            .iter()
            .enumerate()
            .map(|(i, c)| ObjectCategory {
                id: c.id.clone(),
                surface_name: c.name.clone(),
                synonyms: resolve(i, &c.synonyms),
                hypernyms: resolve(i, &c.hypernyms),
                hyponyms: resolve(i, &c.hyponyms),
                train_frequency: 0,
            })
            .collect();
        Ok((ObjectPool { categories, index }, report))
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[ObjectCategory] {
        &self.categories
    }

    pub fn get(&self, idx: usize) -> &ObjectCategory {
        &self.categories[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::Validation(format!("unknown object category {id:?}")))
    }

    /// Synonyms, hypernyms and hyponyms of `target`, from its own lists only.
    pub fn mask_indices(&self, target: usize) -> BTreeSet<usize> {
        let c = &self.categories[target];
        let mut m: BTreeSet<usize> = c
            .synonyms
            .iter()
            .chain(&c.hypernyms)
            .chain(&c.hyponyms)
            .copied()
            .collect();
        m.remove(&target);
        m
    }

    /// Mask set by id; the result never contains `target`.
    pub fn mask_set(&self, target: &str) -> Result<BTreeSet<String>> {
        let t = self.require(target)?;
        Ok(self
            .mask_indices(t)
            .into_iter()
            .map(|i| self.categories[i].id.clone())
            .collect())
    }

    /// Transitive hyponym closure of `root`, including `root`.
    pub fn category_relatives(&self, root: &str) -> Result<BTreeSet<usize>> {
        let r = self.require(root)?;
        self.hyponym_closure(r)
    }

    pub fn hyponym_closure(&self, root: usize) -> Result<BTreeSet<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark = vec![Mark::New; self.len()];
        let mut out = BTreeSet::new();
        // Iterative DFS keeping the active path for cycle reporting.
        let mut path: Vec<(usize, Vec<usize>)> = Vec::new();
        mark[root] = Mark::Active;
        out.insert(root);
        path.push((root, self.categories[root].hyponyms.iter().rev().copied().collect()));
        while let Some((node, pending)) = path.last_mut() {
            let node = *node;
            match pending.pop() {
                Some(next) => match mark[next] {
                    Mark::New => {
                        mark[next] = Mark::Active;
                        out.insert(next);
                        let kids = self.categories[next].hyponyms.iter().rev().copied().collect();
                        path.push((next, kids));
                    }
                    Mark::Active => {
                        let start = path.iter().position(|(n, _)| *n == next).unwrap_or(0);
                        let mut names: Vec<&str> = path[start..]
                            .iter()
                            .map(|(n, _)| self.categories[*n].id.as_str())
                            .collect();
                        names.push(&self.categories[next].id);
                        return Err(Error::Validation(format!(
                            "hyponym cycle: {}",
                            names.join(" -> ")
                        )));
                    }
                    Mark::Done => {}
                },
                None => {
                    mark[node] = Mark::Done;
                    path.pop();
                }
            }
        }
        Ok(out)
    }

    /// Counts train pronouns per gold object into `train_frequency`.
    pub fn with_train_frequencies(mut self, train: &[Dialogue]) -> Self {
        let counts = train_frequencies(&self, train);
        for (c, n) in self.categories.iter_mut().zip(counts) {
            c.train_frequency = n;
        }
        self
    }

    /// Errors on any gold object missing from the pool.
    pub fn check_gold_objects(&self, dialogues: &[Dialogue]) -> Result<()> {
        for d in dialogues {
            for p in &d.pronouns {
                if let Some(g) = &p.gold_object {
                    if self.index_of(g).is_none() {
                        return Err(Error::Validation(format!(
                            "dialogue {}: gold object {g:?} of pronoun {} is not in the pool",
                            d.id, p.span
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn train_frequencies(pool: &ObjectPool, train: &[Dialogue]) -> Vec<usize> {
    let mut counts = vec![0; pool.len()];
    for p in train.iter().flat_map(|d| &d.pronouns) {
        if let Some(i) = p.gold_object.as_deref().and_then(|g| pool.index_of(g)) {
            counts[i] += 1;
        }
    }
    counts
}

/// `Infrequent` iff the category is gold for fewer than `threshold` train pronouns.
pub fn frequency_split(pool: &ObjectPool, train: &[Dialogue], threshold: usize) -> Vec<FrequencyBucket> {
    train_frequencies(pool, train)
        .into_iter()
        .map(|n| {
            if n < threshold {
                FrequencyBucket::Infrequent
            } else {
                FrequencyBucket::Frequent
            }
        })
        .collect()
}

pub const DEFAULT_FREQUENCY_THRESHOLD: usize = 50;

/// Serializes a pool in the layout `load_object_pool` reads.
pub fn write_object_pool(path: impl AsRef<Path>, pool: &ObjectPool) -> Result<()> {
    let path = path.as_ref();
    let names = |s: &BTreeSet<usize>| s.iter().map(|&i| pool.get(i).id.clone()).collect();
    let raw = PoolSpec {
        categories: pool
            .categories
            .iter()
            .map(|c| CategorySpec {
                id: c.id.clone(),
                name: c.surface_name.clone(),
                synonyms: names(&c.synonyms),
                hypernyms: names(&c.hypernyms),
                hyponyms: names(&c.hyponyms),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&raw).expect("pool serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
