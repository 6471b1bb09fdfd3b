use std::collections::BTreeMap;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const PARAM_FILE_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Binary layout, all integers little-endian:
    ///
    /// ```text
    /// u8   version (= 1)
    /// u64  tensor count
    /// per tensor: u64 rank, then rank × u64 dims
    /// all tensor data as f64, in order
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![PARAM_FILE_VERSION];
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a parameter file into bare tensors.
    pub fn tensors_from_bytes(bytes: &[u8]) -> Result<Vec<Tensor>> {
        let mut reader = ByteReader { bytes, pos: 0 };
        let version = reader.u8()?;
        if version != PARAM_FILE_VERSION {
            return Err(Error::ParamFile(format!("unsupported version {version}")));
        }
        let count = reader.u64()?;
        // Each shape entry needs at least 8 bytes.
        if count > (bytes.len() / 8) as u64 {
            return Err(Error::ParamFile(format!(
                "tensor count {count} exceeds file size"
            )));
        }
        let mut shapes = Vec::with_capacity(count as usize);
        let mut total: u64 = 0;
        for _ in 0..count {
            let rank = reader.u64()?;
            if rank > 8 {
                return Err(Error::ParamFile(format!("rank {rank} too large")));
            }
            let mut shape = Vec::with_capacity(rank as usize);
            let mut size: u64 = 1;
            for _ in 0..rank {
                let d = reader.u64()?;
                size = size
                    .checked_mul(d)
                    .ok_or_else(|| Error::ParamFile("tensor size overflows".into()))?;
                shape.push(
                    usize::try_from(d)
                        .map_err(|_| Error::ParamFile("dimension too large".into()))?,
                );
            }
            total = total
                .checked_add(size)
                .ok_or_else(|| Error::ParamFile("total size overflows".into()))?;
            shapes.push(shape);
        }
        let remaining = (bytes.len() - reader.pos) as u64;
        if total.checked_mul(8) != Some(remaining) {
            return Err(Error::ParamFile(format!(
                "expected {total} values, found {remaining} data bytes"
            )));
        }
        shapes
            .into_iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| reader.f64()).collect::<Result<Vec<_>>>()?;
                Tensor::new(shape, data)
            })
            .collect()
    }

    /// Replaces every tensor's values with those decoded from `bytes`;
    /// count and shapes must match exactly.
    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let tensors = Self::tensors_from_bytes(bytes)?;
        if tensors.len() != self.tensors.len() {
            return Err(Error::ParamFile(format!(
                "file holds {} tensors, model has {}",
                tensors.len(),
                self.tensors.len()
            )));
        }
        for (i, (have, new)) in self.tensors.iter().zip(&tensors).enumerate() {
            if have.shape() != new.shape() {
                return Err(Error::ParamFile(format!(
                    "tensor {i} (`{}`) has shape {:?}, file has {:?}",
                    self.names[i],
                    have.shape(),
                    new.shape()
                )));
            }
        }
        self.tensors = tensors;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.load_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self
            .pos
            .checked_add(N)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ParamFile("unexpected end of file".into()))?;
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

/// Parameter gradients from one backward pass. Embedding lookups
/// accumulate row-sparse; everything else is dense.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    dense: BTreeMap<ParamId, Tensor>,
    rows: BTreeMap<ParamId, BTreeMap<usize, Vec<f64>>>,
}

impl Gradients {
    pub(crate) fn accumulate_dense(&mut self, id: ParamId, shape: &[usize], grad: &[f64]) {
        let entry = self.dense.entry(id).or_insert_with(|| Tensor::zeros(shape));
        for (a, g) in entry.data_mut().iter_mut().zip(grad) {
            *a += g;
        }
    }

    pub(crate) fn accumulate_row(&mut self, id: ParamId, row: usize, grad: &[f64]) {
        let entry = self
            .rows
            .entry(id)
            .or_default()
            .entry(row)
            .or_insert_with(|| vec![0.0; grad.len()]);
        for (a, g) in entry.iter_mut().zip(grad) {
            *a += g;
        }
    }

    /// Dense gradient of one parameter (zeros if it was not reached).
    pub fn get(&self, store: &ParamStore, id: ParamId) -> Tensor {
        let mut out = self
            .dense
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()));
        if let Some(rows) = self.rows.get(&id) {
            let cols = out.cols();
            for (&r, g) in rows {
                for (a, v) in out.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        out
    }

    /// Whether any gradient reached the parameter.
    pub fn touches(&self, id: ParamId) -> bool {
        self.dense.contains_key(&id) || self.rows.contains_key(&id)
    }

    pub fn touched(&self) -> impl Iterator<Item = ParamId> + '_ {
        let mut ids: Vec<ParamId> = self.dense.keys().chain(self.rows.keys()).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
    }
}

/// `p <- p - lr * g` over every parameter the gradients reach.
pub fn sgd_step(store: &mut ParamStore, grads: &Gradients, learning_rate: f64) -> Result<()> {
    for (&id, g) in &grads.dense {
        let p = store.get_mut(id);
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= learning_rate * d;
        }
    }
    for (&id, rows) in &grads.rows {
        let p = store.get_mut(id);
        let (n_rows, cols) = (p.rows(), p.cols());
        for (&r, g) in rows {
            if r >= n_rows || g.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "sgd_step",
                    left: p.shape().to_vec(),
                    right: vec![r, g.len()],
                });
            }
            for (w, d) in p.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                *w -= learning_rate * d;
            }
        }
    }
    Ok(())
}
