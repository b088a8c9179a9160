//! Dense row-major `f64` tensors.
//!
//! A [`Tensor`] is a plain value. It only takes part in differentiation once
//! it has been recorded on a [`Tape`](crate::tape::Tape).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("tensor", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    /// 1-D tensor from a slice.
    pub fn vector(data: &[f64]) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data: data.to_vec(),
        }
    }

    /// 2-D tensor from nested rows. Panics on ragged input.
    pub fn matrix(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(cols > 0 && rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Self {
            shape: vec![rows.len(), cols],
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Index of the largest element; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Row-wise argmax of a 2-D tensor, or per-column when `axis == 0`.
    pub fn argmax_axis(&self, axis: usize) -> Result<Vec<usize>> {
        let [rows, cols] = self.dims2("argmax")?;
        match axis {
            0 => Ok((0..cols)
                .map(|c| {
                    let mut best = 0;
                    for r in 1..rows {
                        if self.data[r * cols + c] > self.data[best * cols + c] {
                            best = r;
                        }
                    }
                    best
                })
                .collect()),
            1 => Ok(self
                .data
                .chunks(cols)
                .map(|row| Tensor::vector(row).argmax())
                .collect()),
            _ => Err(Error::dim("argmax axis", &self.shape, &[axis])),
        }
    }

    /// Numerically stable softmax over all elements.
    pub fn softmax(&self) -> Self {
        let max = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.data.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            shape: self.shape.clone(),
            data: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::dim("dot", &self.shape, &other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean_of(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::contract("mean of an empty tensor list"))?;
        let mut acc = vec![0.0; first.len()];
        for t in items {
            if t.shape != first.shape {
                return Err(Error::dim("mean_of", &first.shape, &t.shape));
            }
            for (a, v) in acc.iter_mut().zip(&t.data) {
                *a += v;
            }
        }
        let n = items.len() as f64;
        Ok(Tensor {
            shape: first.shape.clone(),
            data: acc.into_iter().map(|v| v / n).collect(),
        })
    }

    /// Concatenate 1-D tensors end to end.
    pub fn concat(items: &[Tensor]) -> Result<Tensor> {
        if items.is_empty() {
            return Err(Error::contract("concat of an empty tensor list"));
        }
        let mut data = Vec::new();
        for t in items {
            if t.rank() != 1 {
                return Err(Error::dim("concat", t.shape(), &[]));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor::vector(&data))
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape[..] {
            [r, c] => Ok([r, c]),
            _ => Err(Error::dim(op, &self.shape, &[])),
        }
    }
}
