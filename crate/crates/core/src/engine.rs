//! Iterative amplitude enhancement state.
//!
//! The canonical state is the per-channel amplitude in the frequency domain
//! together with the phase of the input, which never changes during an
//! episode. Each step multiplies every channel's amplitude by one shared gain
//! map and rebuilds the RGB view with the inverse transform. Only that view
//! is clamped to `[0, 1]`; the amplitude keeps the unclamped product so the
//! multiplicative recurrence composes across steps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fourier::{self, Plane, Spectrum, MIN_DIM};
use crate::image::ImageTensor;

#[derive(Debug, Clone)]
pub struct EnhanceState {
    step: usize,
    phase0: Arc<[Plane; 3]>,
    amplitude: [Plane; 3],
    unclamped: [Plane; 3],
    rgb: ImageTensor,
}

impl EnhanceState {
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn phase0(&self) -> &[Plane; 3] {
        &self.phase0
    }

    pub fn amplitude(&self) -> &[Plane; 3] {
        &self.amplitude
    }

    /// Per-channel reconstruction before clamping.
    pub fn unclamped(&self) -> &[Plane; 3] {
        &self.unclamped
    }

    pub fn dims(&self) -> (usize, usize) {
        self.rgb.dims()
    }

    /// Starts an episode from `image`.
    pub fn init(image: &ImageTensor) -> Result<Self> {
        let (h, w) = image.dims();
        if h < MIN_DIM || w < MIN_DIM {
            return Err(Error::DimensionTooSmall { height: h, width: w, min: MIN_DIM });
        }
        let channels = image.channels();
        let mut amplitude = Vec::with_capacity(3);
        let mut phase = Vec::with_capacity(3);
        for ch in &channels {
            let spec = fourier::forward_transform(ch)?;
            amplitude.push(spec.amplitude().clone());
            phase.push(spec.phase().clone());
        }
        let amplitude: [Plane; 3] = amplitude.try_into().expect("three channels");
        let phase0: [Plane; 3] = phase.try_into().expect("three channels");
        let unclamped = reconstruct(&amplitude, &phase0)?;
        let rgb = ImageTensor::from_planes(&unclamped)?;
        Ok(Self { step: 0, phase0: Arc::new(phase0), amplitude, unclamped, rgb })
    }

    /// Applies one gain map to all three channel amplitudes.
    pub fn apply(&self, gains: &Plane) -> Result<Self> {
        let mut amplitude = Vec::with_capacity(3);
        for (amp, pha) in self.amplitude.iter().zip(self.phase0.iter()) {
            let spec = Spectrum::from_parts_unchecked(amp.clone(), pha.clone());
            amplitude.push(fourier::scale_amplitude(&spec, gains)?.amplitude().clone());
        }
        let amplitude: [Plane; 3] = amplitude.try_into().expect("three channels");
        let unclamped = reconstruct(&amplitude, &self.phase0)?;
        let rgb = ImageTensor::from_planes(&unclamped)?;
        Ok(Self { step: self.step + 1, phase0: Arc::clone(&self.phase0), amplitude, unclamped, rgb })
    }

    /// The clamped RGB image `x_t`.
    pub fn materialize(&self) -> &ImageTensor {
        &self.rgb
    }

    /// Zero-frequency component of the BT.601 luminance of the clamped image,
    /// i.e. the sum of its luminance values.
    pub fn luminance_zfc(&self) -> f64 {
        luminance_zfc(&self.rgb)
    }

    /// Luminance ZFC divided by the pixel count (mean luminance).
    pub fn normalized_zfc(&self) -> f64 {
        self.luminance_zfc() / self.rgb.pixel_count() as f64
    }
}

fn reconstruct(amplitude: &[Plane; 3], phase: &[Plane; 3]) -> Result<[Plane; 3]> {
    let mut out = Vec::with_capacity(3);
    for (a, p) in amplitude.iter().zip(phase.iter()) {
        out.push(fourier::inverse_transform(&Spectrum::from_parts_unchecked(a.clone(), p.clone()))?);
    }
    Ok(out.try_into().expect("three channels"))
}

pub fn init_state(image: &ImageTensor) -> Result<EnhanceState> {
    EnhanceState::init(image)
}

pub fn step_state(state: &EnhanceState, gains: &Plane) -> Result<EnhanceState> {
    state.apply(gains)
}

pub fn materialize(state: &EnhanceState) -> ImageTensor {
    state.materialize().clone()
}

pub fn state_luminance_zfc(state: &EnhanceState) -> f64 {
    state.luminance_zfc()
}

/// ZFC of an image's luminance plane, taken from its spectrum.
///
/// Images below the transform minimum fall back to the plain sum, which is
/// the same quantity under the unnormalized convention.
pub fn luminance_zfc(image: &ImageTensor) -> f64 {
    let y = image.luminance();
    match fourier::forward_transform(&y) {
        Ok(spec) => fourier::zero_frequency_component(&spec),
        Err(_) => y.sum(),
    }
}

pub fn normalized_luminance_zfc(image: &ImageTensor) -> f64 {
    luminance_zfc(image) / image.pixel_count() as f64
}
