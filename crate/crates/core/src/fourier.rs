//! Two-dimensional DFT with a centered amplitude/phase layout.
//!
//! Convention: the forward transform is unnormalized and the inverse carries
//! the `1/(H·W)` factor. For a real non-negative plane the zero-frequency
//! amplitude is therefore the sum of its values, which is what makes the
//! zero-frequency component (ZFC) a brightness measure. Every illumination
//! target in this crate depends on that choice.
//!
//! Spectra are stored centered: the zero-frequency bin lives at row `H/2`,
//! column `W/2` (integer division) for odd and even sizes alike.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Smallest accepted side length for transforms.
pub const MIN_DIM: usize = 8;

/// A single-channel real signal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::LengthMismatch { expected: height * width, actual: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("plane"));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, values: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self { height, width, values }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane { height: self.height, width: self.width, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Centered polar spectrum of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    amplitude: Plane,
    phase: Plane,
}

impl Spectrum {
    /// Builds a spectrum from polar planes, checking the amplitude/phase invariants.
    pub fn from_polar(amplitude: Plane, phase: Plane) -> Result<Self> {
        if amplitude.dims() != phase.dims() {
            return Err(Error::DimensionMismatch { expected: amplitude.dims(), actual: phase.dims() });
        }
        if amplitude.values.iter().any(|&a| a < 0.0) {
            return Err(Error::Config("negative amplitude".into()));
        }
        if phase.values.iter().any(|&p| p <= -PI || p > PI) {
            return Err(Error::Config("phase outside (-pi, pi]".into()));
        }
        Ok(Self { amplitude, phase })
    }

    pub(crate) fn from_parts_unchecked(amplitude: Plane, phase: Plane) -> Self {
        debug_assert_eq!(amplitude.dims(), phase.dims());
        Self { amplitude, phase }
    }

    pub fn height(&self) -> usize {
        self.amplitude.height
    }

    pub fn width(&self) -> usize {
        self.amplitude.width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.amplitude.dims()
    }

    pub fn amplitude(&self) -> &Plane {
        &self.amplitude
    }

    pub fn phase(&self) -> &Plane {
        &self.phase
    }

    /// Index of the zero-frequency bin in the centered layout.
    pub fn center(&self) -> (usize, usize) {
        (self.height() / 2, self.width() / 2)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized 2D FFT over a row-major buffer.
fn fft2d(buf: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            (p.plan_fft_inverse(width), p.plan_fft_inverse(height))
        } else {
            (p.plan_fft_forward(width), p.plan_fft_forward(height))
        }
    });
    row_fft.process(buf);
    let mut cols = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..height {
        for c in 0..width {
            cols[c * height + r] = buf[r * width + c];
        }
    }
    col_fft.process(&mut cols);
    for c in 0..width {
        for r in 0..height {
            buf[r * width + c] = cols[c * height + r];
        }
    }
}

#[inline]
fn centered_index(row: usize, col: usize, height: usize, width: usize) -> usize {
    ((row + height / 2) % height) * width + (col + width / 2) % width
}

fn wrap_phase(re: f64, im: f64) -> f64 {
    if re == 0.0 && im == 0.0 {
        return 0.0;
    }
    let p = im.atan2(re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < MIN_DIM || width < MIN_DIM {
        return Err(Error::DimensionTooSmall { height, width, min: MIN_DIM });
    }
    Ok(())
}

/// Unnormalized forward DFT, returned in centered polar form.
pub fn forward_transform(plane: &Plane) -> Result<Spectrum> {
    let (h, w) = plane.dims();
    check_dims(h, w)?;
    if plane.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("plane"));
    }
    let mut buf: Vec<Complex64> = plane.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2d(&mut buf, h, w, false);

    let mut amplitude = vec![0.0; h * w];
    let mut phase = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let z = buf[r * w + c];
            let dst = centered_index(r, c, h, w);
            amplitude[dst] = z.norm();
            phase[dst] = wrap_phase(z.re, z.im);
        }
    }
    Ok(Spectrum {
        amplitude: Plane { height: h, width: w, values: amplitude },
        phase: Plane { height: h, width: w, values: phase },
    })
}

/// Inverse DFT returning the real part together with the largest discarded
/// imaginary magnitude.
///
/// The real part is rebuilt from `amp·cos(phase) + j·amp·sin(phase)`. For
/// spectra that are not conjugate-symmetric (for example after a
/// non-symmetric gain map) the real part equals the inverse of the
/// symmetrized spectrum.
pub fn inverse_transform_with_residual(spectrum: &Spectrum) -> Result<(Plane, f64)> {
    let (h, w) = spectrum.dims();
    check_dims(h, w)?;
    let amp = &spectrum.amplitude.values;
    let pha = &spectrum.phase.values;
    if amp.iter().chain(pha.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectrum"));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            let src = centered_index(r, c, h, w);
            let (s, co) = pha[src].sin_cos();
            buf[r * w + c] = Complex64::new(amp[src] * co, amp[src] * s);
        }
    }
    fft2d(&mut buf, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    let mut residual: f64 = 0.0;
    let values = buf
        .iter()
        .map(|z| {
            residual = residual.max((z.im * scale).abs());
            z.re * scale
        })
        .collect();
    Ok((Plane { height: h, width: w, values }, residual))
}

/// Inverse DFT of a centered polar spectrum; the imaginary residual is dropped.
pub fn inverse_transform(spectrum: &Spectrum) -> Result<Plane> {
    inverse_transform_with_residual(spectrum).map(|(p, _)| p)
}

/// Amplitude at the centered zero-frequency bin.
pub fn zero_frequency_component(spectrum: &Spectrum) -> f64 {
    let (r, c) = spectrum.center();
    spectrum.amplitude.get(r, c)
}

/// Multiplies every amplitude bin by the matching gain; phase is untouched.
pub fn scale_amplitude(spectrum: &Spectrum, gains: &Plane) -> Result<Spectrum> {
    if gains.dims() != spectrum.dims() {
        return Err(Error::DimensionMismatch { expected: spectrum.dims(), actual: gains.dims() });
    }
    if let Some(&g) = gains.values.iter().find(|&&g| g <= 0.0 || !g.is_finite()) {
        return Err(Error::NonPositiveGain(g));
    }
    let values = spectrum.amplitude.values.iter().zip(&gains.values).map(|(a, g)| a * g).collect();
    Ok(Spectrum {
        amplitude: Plane { height: gains.height, width: gains.width, values },
        phase: spectrum.phase.clone(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N²) DFT, centered, as (re, im) pairs.
    pub(crate) fn brute_force_dft(plane: &Plane) -> Vec<(f64, f64)> {
        let (h, w) = plane.dims();
        let mut out = vec![(0.0, 0.0); h * w];
        for ku in 0..h {
            for kv in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let theta = -2.0 * PI * ((ku * y) as f64 / h as f64 + (kv * x) as f64 / w as f64);
                        let v = plane.get(y, x);
                        re += v * theta.cos();
                        im += v * theta.sin();
                    }
                }
                let r = (ku + h / 2) % h;
                let c = (kv + w / 2) % w;
                out[r * w + c] = (re, im);
            }
        }
        out
    }

    pub(crate) fn random_plane(rng: &mut impl Rng, h: usize, w: usize) -> Plane {
        Plane::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    fn max_rel_err(a: &Plane, b: &Plane) -> f64 {
        let scale = a.max_abs().max(1e-300);
        a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn too_small_plane_is_rejected() {
        let p = Plane::filled(4, 4, 0.5);
        assert!(matches!(forward_transform(&p), Err(Error::DimensionTooSmall { .. })));
    }

    #[test]
    fn non_finite_plane_is_rejected() {
        assert!(Plane::new(8, 8, vec![f64::NAN; 64]).is_err());
    }

    #[test]
    fn constant_plane_has_dc_only() {
        let spec = forward_transform(&Plane::filled(8, 8, 0.5)).unwrap();
        let (cr, cc) = spec.center();
        assert_eq!((cr, cc), (4, 4));
        for r in 0..8 {
            for c in 0..8 {
                let a = spec.amplitude().get(r, c);
                if (r, c) == (cr, cc) {
                    assert!((a - 32.0).abs() < 1e-12);
                } else {
                    assert!(a.abs() < 1e-12, "bin ({r},{c}) = {a}");
                }
            }
        }
    }

    #[test]
    fn zero_plane_has_zero_amplitude_and_phase() {
        let spec = forward_transform(&Plane::filled(9, 8, 0.0)).unwrap();
        assert!(spec.amplitude().values().iter().all(|&a| a == 0.0));
        assert!(spec.phase().values().iter().all(|&p| p == 0.0));
        assert_eq!(zero_frequency_component(&spec), 0.0);
    }

    #[test]
    fn matches_brute_force_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(h, w) in &[(8, 8), (9, 11), (15, 15), (16, 16), (8, 13)] {
            let p = random_plane(&mut rng, h, w);
            let spec = forward_transform(&p).unwrap();
            let oracle = brute_force_dft(&p);
            for (i, &(re, im)) in oracle.iter().enumerate() {
                let (s, c) = spec.phase().values()[i].sin_cos();
                let a = spec.amplitude().values()[i];
                assert!((a * c - re).abs() < 1e-9 && (a * s - im).abs() < 1e-9, "{h}x{w} bin {i}");
            }
        }
    }

    #[test]
    fn roundtrip_odd_and_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(h, w) in &[(8, 8), (15, 15), (16, 32), (16, 16)] {
            let p = random_plane(&mut rng, h, w);
            let spec = forward_transform(&p).unwrap();
            let (back, residual) = inverse_transform_with_residual(&spec).unwrap();
            assert!(max_rel_err(&p, &back) < 1e-10);
            assert!(residual < 1e-9 * spec.amplitude().max_abs());
        }
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let (h, w) = (8, 10);
        let mut amp = Plane::filled(h, w, 0.0);
        amp.values[(h / 2) * w + w / 2] = 16.0;
        let spec = Spectrum::from_polar(amp, Plane::filled(h, w, 0.0)).unwrap();
        let out = inverse_transform(&spec).unwrap();
        assert!(out.values().iter().all(|&v| (v - 16.0 / 80.0).abs() < 1e-14));
    }

    #[test]
    fn uniform_gain_scales_the_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_plane(&mut rng, 12, 16);
        let spec = forward_transform(&p).unwrap();
        for &k in &[0.2, 0.5, 2.0, 0.2f64.exp()] {
            let scaled = scale_amplitude(&spec, &Plane::filled(12, 16, k)).unwrap();
            let out = inverse_transform(&scaled).unwrap();
            for (o, v) in out.values().iter().zip(p.values()) {
                assert!((o - k * v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zfc_equals_sum_and_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_plane(&mut rng, 8, 12);
        let z = zero_frequency_component(&forward_transform(&p).unwrap());
        assert!((z - p.sum()).abs() < 1e-9 * p.sum());
        for &k in &[0.2, 0.5, 2.0] {
            let zk = zero_frequency_component(&forward_transform(&p.map(|v| k * v)).unwrap());
            assert!((zk - k * z).abs() <= 1e-9 * k * z);
        }
    }

    #[test]
    fn scale_amplitude_identity_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = forward_transform(&random_plane(&mut rng, 8, 8)).unwrap();
        let same = scale_amplitude(&spec, &Plane::filled(8, 8, 1.0)).unwrap();
        assert_eq!(same.amplitude(), spec.amplitude());
        let g = 0.2f64.exp();
        let up = scale_amplitude(&spec, &Plane::filled(8, 8, g)).unwrap();
        for (a, b) in up.amplitude().values().iter().zip(spec.amplitude().values()) {
            assert!((a - g * b).abs() < 1e-12 * (1.0 + b));
        }
        assert_eq!(up.phase(), spec.phase());
    }

    #[test]
    fn scale_amplitude_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = forward_transform(&random_plane(&mut rng, 10, 8)).unwrap();
        let g1 = Plane::from_fn(10, 8, |_, _| rng.random_range(0.9..1.25));
        let g2 = Plane::from_fn(10, 8, |_, _| rng.random_range(0.9..1.25));
        let g12 = Plane::from_fn(10, 8, |r, c| g1.get(r, c) * g2.get(r, c));
        let twice = scale_amplitude(&scale_amplitude(&spec, &g1).unwrap(), &g2).unwrap();
        let once = scale_amplitude(&spec, &g12).unwrap();
        for (a, b) in twice.amplitude().values().iter().zip(once.amplitude().values()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn scale_amplitude_rejects_bad_gains() {
        let spec = forward_transform(&Plane::filled(8, 8, 0.3)).unwrap();
        assert!(matches!(scale_amplitude(&spec, &Plane::filled(8, 9, 1.0)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(scale_amplitude(&spec, &Plane::filled(8, 8, 0.0)), Err(Error::NonPositiveGain(_))));
    }

    proptest::proptest! {
        #[test]
        fn phase_stays_in_half_open_interval(seed in 0u64..500, h in 8usize..14, w in 8usize..14) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Plane::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0));
            let spec = forward_transform(&p).unwrap();
            proptest::prop_assert!(spec.phase().values().iter().all(|&x| x > -PI && x <= PI));
            proptest::prop_assert!(spec.amplitude().values().iter().all(|&a| a >= 0.0));
            let gains = Plane::from_fn(h, w, |_, _| rng.random_range(0.5..2.0));
            let scaled = scale_amplitude(&spec, &gains).unwrap();
            proptest::prop_assert_eq!(scaled.phase(), spec.phase());
        }
    }
}
