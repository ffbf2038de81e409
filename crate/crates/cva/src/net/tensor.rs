//! Dense 4-D activation tensor with `(y, x, depth, channel)` axes, the
//! channel index fastest, matching the cost-volume layout with a channel
//! axis appended.

use super::scalar::Scalar;
use crate::volume::PatchTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<S> {
    h: usize,
    w: usize,
    d: usize,
    c: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn zeros(h: usize, w: usize, d: usize, c: usize) -> Self {
        Tensor4 {
            h,
            w,
            d,
            c,
            data: vec![S::zero(); h * w * d * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, d: usize, c: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), h * w * d * c, "tensor data length mismatch");
        Tensor4 { h, w, d, c, data }
    }

    /// Converts an extracted cost-volume patch into a one-channel tensor.
    pub fn from_patch(p: &PatchTensor) -> Self {
        let data = p.values().iter().map(|&v| S::from_single(v)).collect();
        Tensor4::from_vec(p.n(), p.n(), p.depth(), 1, data)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.h, self.w, self.d, self.c)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn depth(&self) -> usize {
        self.d
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, d: usize, c: usize) -> usize {
        debug_assert!(y < self.h && x < self.w && d < self.d && c < self.c);
        ((y * self.w + x) * self.d + d) * self.c + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, d: usize, c: usize) -> S {
        self.data[self.idx(y, x, d, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, d: usize, c: usize, v: S) {
        let i = self.idx(y, x, d, c);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }
}
