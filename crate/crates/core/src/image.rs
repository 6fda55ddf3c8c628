use crate::error::{Error, Result};
use crate::fourier::Plane;

/// BT.601 luma weights (R, G, B).
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// An RGB image with values in `[0, 1]`, stored interleaved row-major (`H×W×3`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionTooSmall { height, width, min: 1 });
        }
        if data.len() != height * width * 3 {
            return Err(Error::LengthMismatch { expected: height * width * 3, actual: data.len() });
        }
        if let Some(&v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(if v.is_finite() { Error::ValueOutOfRange(v) } else { Error::NonFinite("image") });
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image from unconstrained values, clamping each into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * 3);
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self { height, width, data }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self::from_clamped(height, width, vec![value; height * width * 3])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self::from_clamped(height, width, data)
    }

    /// Assembles an image from three channel planes, clamping into `[0, 1]`.
    pub fn from_planes(planes: &[Plane; 3]) -> Result<Self> {
        let (h, w) = planes[0].dims();
        for p in &planes[1..] {
            if p.dims() != (h, w) {
                return Err(Error::DimensionMismatch { expected: (h, w), actual: p.dims() });
            }
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for i in 0..h * w {
            for p in planes {
                data.push(p.values()[i]);
            }
        }
        Ok(Self::from_clamped(h, w, data))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn channel(&self, c: usize) -> Plane {
        let values = self.data.iter().skip(c).step_by(3).copied().collect();
        Plane::new(self.height, self.width, values).expect("channel of a valid image")
    }

    pub fn channels(&self) -> [Plane; 3] {
        [self.channel(0), self.channel(1), self.channel(2)]
    }

    /// BT.601 luminance plane.
    pub fn luminance(&self) -> Plane {
        let values = self.data.chunks_exact(3).map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).collect();
        Plane::new(self.height, self.width, values).expect("luminance of a valid image")
    }

    pub fn mean_luminance(&self) -> f64 {
        self.luminance().sum() / self.pixel_count() as f64
    }

    /// Channel-planar copy (`3×H×W`), the layout the network consumes.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.pixel_count();
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out[i] = px[0];
            out[n + i] = px[1];
            out[2 * n + i] = px[2];
        }
        out
    }

    /// Copies a `size×size` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: (row + height, col + width) });
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for r in row..row + height {
            let start = (r * self.width + col) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(Self { height, width, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_clamped(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
