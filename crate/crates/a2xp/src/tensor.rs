//! Dense CHW image tensors backed by flat `Vec<f64>`.

use crate::error::{Error, Result};

/// Channel/height/width shape of an image tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape3 { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

/// A single image in CHW layout. Values are typically in [0, 1] for data
/// and unconstrained for prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape3,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(shape: Shape3) -> Self {
        Image {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape3, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                format!("{} values for {shape}", shape.len()),
                format!("{} values", data.len()),
            ));
        }
        Ok(Image { shape, data })
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// Elementwise sum with another tensor of the same shape.
    pub fn add(&self, other: &Image) -> Result<Image> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape.to_string(), other.shape.to_string()));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Image {
            shape: self.shape,
            data,
        })
    }

    /// L2 norm over all entries.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Maximum absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_requires_matching_shapes() {
        let a = Image::zeros(Shape3::new(3, 4, 4));
        let b = Image::zeros(Shape3::new(3, 4, 5));
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Image::from_vec(Shape3::new(1, 2, 2), vec![0.0; 3]).is_err());
        assert!(Image::from_vec(Shape3::new(1, 2, 2), vec![0.0; 4]).is_ok());
    }

    #[test]
    fn l2_norm_matches_hand_sum() {
        let img = Image::from_vec(Shape3::new(1, 1, 3), vec![3.0, 0.0, 4.0]).unwrap();
        assert!((img.l2_norm() - 5.0).abs() < 1e-12);
    }
}
