//! Dense tensors and named parameter collections.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Dense row-major `f64` array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Precondition(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                expected: shape,
                got: vec![data.len()],
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![v],
            grad: None,
        }
    }

    /// A `rows x cols` matrix.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// A single-row matrix holding `v`.
    pub fn row(v: &[f64]) -> Self {
        Self {
            shape: vec![1, v.len().max(1)],
            data: if v.is_empty() { vec![0.0] } else { v.to_vec() },
            grad: None,
        }
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Precondition("from_rows needs at least one row".into()));
        };
        let cols = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    expected: vec![cols],
                    got: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn is_tracked(&self) -> bool {
        self.grad.is_some()
    }

    /// Attaches a zeroed gradient buffer.
    pub fn tracked(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Interprets the tensor as a matrix: rank 0 is 1x1, rank 1 is a single row.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [] => Ok((1, 1)),
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::Shape {
                op: "dims2",
                expected: vec![0, 0],
                got: self.shape.clone(),
            }),
        }
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let cols = self.shape.last().copied().unwrap_or(1);
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    pub(crate) by_name: BTreeMap<String, Vec<f64>>,
}

impl Grads {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.by_name.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}

/// Named parameter tensors, iterated in sorted name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
    version: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a parameter with a zeroed gradient slot. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Precondition(format!("duplicate parameter `{name}`")));
        }
        let tensor = if tensor.is_tracked() {
            tensor
        } else {
            tensor.tracked()
        };
        self.tensors.insert(name, tensor);
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn insert_raw(&mut self, name: String, tensor: Tensor) {
        self.tensors.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.zero_grad();
        }
    }

    /// Adds the gradients whose names belong to this set. Returns how many matched.
    pub fn accumulate(&mut self, grads: &Grads) -> usize {
        let mut matched = 0;
        for (name, g) in &grads.by_name {
            if let Some(t) = self.tensors.get_mut(name) {
                let slot = t.grad.get_or_insert_with(|| vec![0.0; g.len()]);
                for (s, v) in slot.iter_mut().zip(g) {
                    *s += v;
                }
                matched += 1;
            }
        }
        matched
    }

    /// Rescales gradients of parameters starting with `prefix` so their joint L2 norm is at
    /// most `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, prefix: &str, max_norm: f64) -> f64 {
        let mut sq = 0.0;
        for (name, t) in &self.tensors {
            if name.starts_with(prefix) {
                if let Some(g) = &t.grad {
                    sq += g.iter().map(|x| x * x).sum::<f64>();
                }
            }
        }
        let norm = sq.sqrt();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for (name, t) in self.tensors.iter_mut() {
                if name.starts_with(prefix) {
                    if let Some(g) = &mut t.grad {
                        g.iter_mut().for_each(|x| *x *= scale);
                    }
                }
            }
        }
        norm
    }

    /// Order-sensitive digest of every parameter value; used to audit immutability.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over names and raw bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, t) in &self.tensors {
            feed(name.as_bytes());
            for d in &t.shape {
                feed(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Copies values (not gradients) of every parameter in `other` whose name is present here.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<()> {
        for (name, src) in &other.tensors {
            let dst = self.get_mut(name)?;
            if dst.shape != src.shape {
                return Err(Error::Shape {
                    op: "copy_values_from",
                    expected: dst.shape.clone(),
                    got: src.shape.clone(),
                });
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_length_must_match_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.dims2().unwrap(), (2, 3));
    }

    #[test]
    fn param_names_are_unique_and_sorted() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::scalar(1.0)).unwrap();
        p.insert("a", Tensor::scalar(2.0)).unwrap();
        assert!(p.insert("a", Tensor::scalar(3.0)).is_err());
        let names: Vec<_> = p.iter().map(|(n, _)| n.to_string()).collect();
        assert_eq!(names, ["a", "b"]);
        assert!(p.get("a").unwrap().is_tracked());
    }

    #[test]
    fn clip_grad_norm_scales_only_prefix() {
        let mut p = ParamSet::new();
        p.insert("x.w", Tensor::row(&[0.0, 0.0])).unwrap();
        p.insert("y.w", Tensor::row(&[0.0])).unwrap();
        p.get_mut("x.w").unwrap().grad_mut().unwrap().copy_from_slice(&[3.0, 4.0]);
        p.get_mut("y.w").unwrap().grad_mut().unwrap()[0] = 10.0;
        let n = p.clip_grad_norm("x.", 1.0);
        assert_eq!(n, 5.0);
        let g = p.get("x.w").unwrap().grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        assert_eq!(p.get("y.w").unwrap().grad().unwrap(), &[10.0]);
    }
}
