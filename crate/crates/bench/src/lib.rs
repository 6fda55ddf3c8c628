//! Benchmarks live in `benches/`; this library only provides their inputs.

use lumen_core::ImageTensor;

/// Dark test image with structure in every channel.
pub fn dark_image(size: usize) -> ImageTensor {
    ImageTensor::from_fn(size, size, |r, c| {
        let v = 0.05 + 0.2 * (((r * 13 + c * 7) % 31) as f64 / 31.0);
        [v, v * 0.9, v * 1.1]
    })
}
