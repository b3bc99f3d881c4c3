use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::exact_sum;

use crate::error::{Error, Result};

pub type Tensor = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named parameter matrices, keyed by module path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Parameter count of every entry whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.names
            .iter()
            .zip(&self.values)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.len())
            .sum()
    }

    pub fn to_archive(&self) -> ParamArchive {
        ParamArchive {
            entries: self
                .index
                .iter()
                .map(|(name, &i)| {
                    let v = &self.values[i];
                    (
                        name.clone(),
                        ArchivedTensor {
                            rows: v.nrows(),
                            cols: v.ncols(),
                            data: v.iter().copied().collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Overwrites values from an archive; names and shapes must match exactly.
    pub fn load_archive(&mut self, archive: &ParamArchive) -> Result<()> {
        if archive.entries.len() != self.values.len() {
            return Err(Error::Config(format!(
                "archive has {} parameters, model has {}",
                archive.entries.len(),
                self.values.len()
            )));
        }
        for (name, t) in &archive.entries {
            let id = self
                .id(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
            let v = &mut self.values[id.0];
            if v.nrows() != t.rows || v.ncols() != t.cols || t.data.len() != t.rows * t.cols {
                return Err(Error::Shape(format!(
                    "parameter {name}: archive {}x{}, model {}x{}",
                    t.rows,
                    t.cols,
                    v.nrows(),
                    v.ncols()
                )));
            }
            v.iter_mut().zip(&t.data).for_each(|(d, s)| *d = *s);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Serializable snapshot of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArchive {
    pub entries: BTreeMap<String, ArchivedTensor>,
}

impl ParamArchive {
    /// Elementwise mean of archives with identical keys and shapes.
    pub fn average(archives: &[ParamArchive]) -> Result<ParamArchive> {
        let first = archives
            .first()
            .ok_or_else(|| Error::Config("nothing to average".into()))?;
        let mut entries = BTreeMap::new();
        for (name, t) in &first.entries {
            let mut columns: Vec<&[f64]> = Vec::with_capacity(archives.len());
            for a in archives {
                let other = a
                    .entries
                    .get(name)
                    .filter(|o| {
                        o.rows == t.rows && o.cols == t.cols && o.data.len() == t.data.len()
                    })
                    .ok_or_else(|| {
                        Error::Config(format!("parameter {name} missing or reshaped"))
                    })?;
                columns.push(&other.data);
            }
            // correctly rounded sums make the mean independent of archive order
            let k = archives.len() as f64;
            let acc: Vec<f64> = (0..t.data.len())
                .map(|i| exact_sum(columns.iter().map(|c| c[i])) / k)
                .collect();
            entries.insert(
                name.clone(),
                ArchivedTensor {
                    rows: t.rows,
                    cols: t.cols,
                    data: acc,
                },
            );
        }
        if archives.iter().any(|a| a.entries.len() != entries.len()) {
            return Err(Error::Config(
                "archives hold different parameter sets".into(),
            ));
        }
        Ok(ParamArchive { entries })
    }
}

/// Creates named, initialized parameters under a path prefix.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: &str) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        ParamBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64) -> ParamId {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        let full = self.full_name(name);
        self.store
            .insert(&full, Tensor::from_shape_vec((rows, cols), data).unwrap())
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let full = self.full_name(name);
        self.store.insert(&full, Tensor::zeros((rows, cols)))
    }
}
