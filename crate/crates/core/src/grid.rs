//! Dense row-major N-dimensional grid. The last axis varies fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("empty grid shape {shape:?}")));
        }
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} holds {n} elements, data has {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for_each_index(&shape, |idx, _| data.push(f(idx)));
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &n) in idx.iter().zip(&self.shape) {
            debug_assert!(*i < n);
            off = off * n + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid { shape: self.shape.clone(), data: self.data.iter().copied().map(f).collect() }
    }

    /// Sub-grid `lo..hi` (exclusive) along every axis.
    pub fn crop(&self, lo: &[usize], hi: &[usize]) -> Grid<T> {
        let shape: Vec<usize> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
        let mut src = vec![0; lo.len()];
        Grid::from_fn(shape, |idx| {
            for a in 0..idx.len() {
                src[a] = idx[a] + lo[a];
            }
            self.get(&src)
        })
    }

    /// Reverse the order of elements along `axis`.
    pub fn flip(&self, axis: usize) -> Grid<T> {
        let n = self.shape[axis];
        let mut src = vec![0; self.ndim()];
        Grid::from_fn(self.shape.clone(), |idx| {
            src.copy_from_slice(idx);
            src[axis] = n - 1 - idx[axis];
            self.get(&src)
        })
    }

    /// View of the sub-grid at index `i` of the leading axis (e.g. one channel).
    pub fn slab(&self, i: usize) -> Grid<T> {
        let inner: usize = self.shape[1..].iter().product();
        Grid { shape: self.shape[1..].to_vec(), data: self.data[i * inner..(i + 1) * inner].to_vec() }
    }

    /// Stack equally shaped grids along a new leading axis.
    pub fn stack(parts: &[Grid<T>]) -> Result<Grid<T>> {
        let first = parts.first().ok_or(Error::EmptyInput("no grids to stack"))?;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape, first.shape)));
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Grid { shape, data })
    }
}

pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Visit every multi-index of `shape` in row-major order together with its flat offset.
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize], usize)) {
    let n: usize = shape.iter().product();
    if n == 0 {
        return;
    }
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..n {
        f(&idx, flat);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Apply `f` to every 1-D line of `data` (row-major, `shape`) running along `axis`,
/// writing into an output of the same shape except `out_len` along `axis`.
pub(crate) fn map_lines<T: Copy, U: Copy + Default>(
    shape: &[usize],
    data: &[T],
    axis: usize,
    out_len: usize,
    mut f: impl FnMut(&[T], &mut [U]),
) -> (Vec<usize>, Vec<U>) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = out_len;
    let mut out = vec![U::default(); outer * out_len * inner];
    let mut line = Vec::with_capacity(n);
    let mut res = vec![U::default(); out_len];
    for o in 0..outer {
        for i in 0..inner {
            line.clear();
            let base = o * n * inner + i;
            line.extend((0..n).map(|k| data[base + k * inner]));
            f(&line, &mut res);
            let obase = o * out_len * inner + i;
            for (k, v) in res.iter().enumerate() {
                out[obase + k * inner] = *v;
            }
        }
    }
    (out_shape, out)
}
