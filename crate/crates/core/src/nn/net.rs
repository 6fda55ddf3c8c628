//! Fully-convolutional policy/value network with a hand-written backward pass.
//!
//! Trunk: three 3×3 same-padded convolutions with ReLU. Heads: a 1×1
//! convolution to 31 action logits and a 1×1 convolution to one value per
//! cell. Parameters live in one flat buffer; [`Architecture::tensors`]
//! describes the layout, which is also the checkpoint order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{Plane, MIN_DIM};
use crate::image::ImageTensor;
use crate::rl::ACTION_COUNT;

const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub in_channels: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { in_channels: 3, hidden: vec![32, 32, 32], actions: ACTION_COUNT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Architecture {
    /// Small trunk used for gradient checks.
    pub fn tiny() -> Self {
        Self { in_channels: 3, hidden: vec![4, 4, 4], actions: ACTION_COUNT }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != 3 || self.actions != ACTION_COUNT || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::ShapeMismatch(format!("unsupported architecture {self:?}")));
        }
        Ok(())
    }

    /// Parameter tensors in storage order.
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        let mut cin = self.in_channels;
        for (i, &cout) in self.hidden.iter().enumerate() {
            out.push(TensorSpec { name: format!("conv{}.weight", i + 1), shape: vec![cout, cin, KERNEL, KERNEL] });
            out.push(TensorSpec { name: format!("conv{}.bias", i + 1), shape: vec![cout] });
            cin = cout;
        }
        out.push(TensorSpec { name: "policy.weight".into(), shape: vec![self.actions, cin] });
        out.push(TensorSpec { name: "policy.bias".into(), shape: vec![self.actions] });
        out.push(TensorSpec { name: "value.weight".into(), shape: vec![1, cin] });
        out.push(TensorSpec { name: "value.bias".into(), shape: vec![1] });
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(TensorSpec::len).sum()
    }

    fn trunk_out(&self) -> usize {
        *self.hidden.last().expect("validated")
    }
}

/// Per-parameter gradient buffer, congruent with a network's flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub values: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-cell logits stored action-major: `data[a·H·W + cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub height: usize,
    pub width: usize,
    pub actions: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn at(&self, cell: usize, action: usize) -> f64 {
        self.data[action * self.cells() + cell]
    }

    /// Softmax over the action axis for one cell.
    pub fn probabilities(&self, cell: usize) -> Vec<f64> {
        let n = self.cells();
        let max = (0..self.actions).map(|a| self.data[a * n + cell]).fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = (0..self.actions).map(|a| (self.data[a * n + cell] - max).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }
}

#[derive(Debug, Clone)]
pub struct NetOutput {
    pub logits: Logits,
    pub values: Plane,
}

/// Activations kept for the backward pass.
pub(crate) struct ForwardCache {
    height: usize,
    width: usize,
    /// Layer inputs (planar `C×H×W`), starting with the image.
    inputs: Vec<Vec<f64>>,
    /// Post-ReLU output of the last trunk layer.
    trunk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    arch: Architecture,
    params: Vec<f64>,
}

impl PolicyValueNet {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Ok(Self { arch, params: vec![0.0; n] })
    }

    /// Uniform `±sqrt(1/fan_in)` initialization for weights and biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        let tensors = arch.tensors();
        for pair in tensors.chunks(2) {
            let fan_in: usize = pair[0].shape[1..].iter().product();
            let bound = (1.0 / fan_in as f64).sqrt();
            for t in pair {
                params.extend((0..t.len()).map(|_| rng.random_range(-bound..=bound)));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, image: &ImageTensor) -> Result<NetOutput> {
        self.forward_cached(image).map(|(out, _)| out)
    }

    pub(crate) fn forward_cached(&self, image: &ImageTensor) -> Result<(NetOutput, ForwardCache)> {
        let (h, w) = image.dims();
        if h < MIN_DIM || w < MIN_DIM {
            return Err(Error::DimensionTooSmall { height: h, width: w, min: MIN_DIM });
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        let hw = h * w;
        let mut offset = 0;
        let mut cin = self.arch.in_channels;
        let mut x = image.to_planar();
        let mut inputs = Vec::with_capacity(self.arch.hidden.len());
        let mut cols = Vec::new();
        for &cout in &self.arch.hidden {
            let wlen = cout * cin * TAPS;
            let weight = &self.params[offset..offset + wlen];
            let bias = &self.params[offset + wlen..offset + wlen + cout];
            offset += wlen + cout;
            im2col(&x, cin, h, w, &mut cols);
            let mut y = vec![0.0; cout * hw];
            for (co, row) in y.chunks_exact_mut(hw).enumerate() {
                row.fill(bias[co]);
            }
            gemm(cout, cin * TAPS, hw, weight, false, &cols, false, &mut y, 1.0);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            inputs.push(std::mem::replace(&mut x, y));
            cin = cout;
        }
        let trunk = x;
        let actions = self.arch.actions;
        let pw = &self.params[offset..offset + actions * cin];
        let pb = &self.params[offset + actions * cin..offset + actions * cin + actions];
        offset += actions * cin + actions;
        let vw = &self.params[offset..offset + cin];
        let vb = self.params[offset + cin];

        let mut logits = vec![0.0; actions * hw];
        for (a, row) in logits.chunks_exact_mut(hw).enumerate() {
            row.fill(pb[a]);
        }
        gemm(actions, cin, hw, pw, false, &trunk, false, &mut logits, 1.0);
        let mut values = vec![vb; hw];
        gemm(1, cin, hw, vw, false, &trunk, false, &mut values, 1.0);

        let out = NetOutput {
            logits: Logits { height: h, width: w, actions, data: logits },
            values: Plane::new(h, w, values)?,
        };
        Ok((out, ForwardCache { height: h, width: w, inputs, trunk }))
    }

    /// Accumulates parameter gradients for upstream gradients on the logits
    /// (action-major, like [`Logits::data`]) and on the per-cell values.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_logits: &[f64], d_values: &[f64], grads: &mut GradientSet) {
        let (h, w) = (cache.height, cache.width);
        let hw = h * w;
        let tensors = self.arch.tensors();
        let trunk_layers = self.arch.hidden.len();
        let mut offsets = Vec::with_capacity(tensors.len());
        let mut acc = 0;
        for t in &tensors {
            offsets.push(acc);
            acc += t.len();
        }
        let cin = self.arch.trunk_out();
        let actions = self.arch.actions;
        let head = 2 * trunk_layers;

        // Heads.
        let (pw_off, pb_off, vw_off, vb_off) = (offsets[head], offsets[head + 1], offsets[head + 2], offsets[head + 3]);
        gemm(
            actions,
            hw,
            cin,
            d_logits,
            false,
            &cache.trunk,
            true,
            &mut grads.values[pw_off..pw_off + actions * cin],
            1.0,
        );
        for a in 0..actions {
            grads.values[pb_off + a] += d_logits[a * hw..(a + 1) * hw].iter().sum::<f64>();
        }
        gemm(1, hw, cin, d_values, false, &cache.trunk, true, &mut grads.values[vw_off..vw_off + cin], 1.0);
        grads.values[vb_off] += d_values.iter().sum::<f64>();

        let mut d_act = vec![0.0; cin * hw];
        gemm(cin, actions, hw, &self.params[pw_off..pw_off + actions * cin], true, d_logits, false, &mut d_act, 1.0);
        gemm(cin, 1, hw, &self.params[vw_off..vw_off + cin], true, d_values, false, &mut d_act, 1.0);

        // Trunk, last layer first.
        let mut output = &cache.trunk;
        let mut cols = Vec::new();
        for layer in (0..trunk_layers).rev() {
            let cout = self.arch.hidden[layer];
            let lin = if layer == 0 { self.arch.in_channels } else { self.arch.hidden[layer - 1] };
            let input = &cache.inputs[layer];
            for (d, &y) in d_act.iter_mut().zip(output.iter()) {
                if y <= 0.0 {
                    *d = 0.0;
                }
            }
            let (w_off, b_off) = (offsets[2 * layer], offsets[2 * layer + 1]);
            im2col(input, lin, h, w, &mut cols);
            let k = lin * TAPS;
            gemm(cout, hw, k, &d_act, false, &cols, true, &mut grads.values[w_off..w_off + cout * k], 1.0);
            for co in 0..cout {
                grads.values[b_off + co] += d_act[co * hw..(co + 1) * hw].iter().sum::<f64>();
            }
            if layer > 0 {
                let mut d_cols = vec![0.0; k * hw];
                gemm(k, cout, hw, &self.params[w_off..w_off + cout * k], true, &d_act, false, &mut d_cols, 0.0);
                d_act = col2im(&d_cols, lin, h, w);
                output = &cache.inputs[layer];
            }
        }
    }
}

/// `c = a·b + beta·c` for row-major matrices, `a` is `m×k` (or its transpose
/// stored `k×m`), `b` is `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold m×k, k×n and m×n elements and the strides
    // describe exactly those shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds 3×3 zero-padded neighbourhoods: `cols[(ci·9 + tap)·HW + cell]`.
fn im2col(x: &[f64], channels: usize, h: usize, w: usize, cols: &mut Vec<f64>) {
    let hw = h * w;
    cols.clear();
    cols.resize(channels * TAPS * hw, 0.0);
    for ci in 0..channels {
        let src = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let dst = &mut cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let (x0, x1) = (dx.max(0) as usize, (w as isize + dx.min(0)) as usize);
                    let row = &src[sy as usize * w..][..w];
                    let out = &mut dst[y * w..][..w];
                    // out[x] = row[x + dx] for x in the valid span
                    let (o0, o1) = ((x0 as isize - dx) as usize, (x1 as isize - dx) as usize);
                    out[o0..o1].copy_from_slice(&row[x0..x1]);
                }
            }
        }
    }
}

fn col2im(cols: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut x = vec![0.0; channels * hw];
    for ci in 0..channels {
        let dst = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let src = &cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let (x0, x1) = (dx.max(0) as usize, (w as isize + dx.min(0)) as usize);
                    let (o0, o1) = ((x0 as isize - dx) as usize, (x1 as isize - dx) as usize);
                    let row = &mut dst[sy as usize * w..][..w];
                    for (d, s) in row[x0..x1].iter_mut().zip(&src[y * w + o0..y * w + o1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(seed: u64, h: usize, w: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    /// Direct 3×3 same-padded convolution used to check the im2col path.
    fn naive_conv(x: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let cout = bias.len();
        let mut out = vec![0.0; cout * h * w];
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += weight[((co * cin + ci) * 3 + ky) * 3 + kx]
                                    * x[ci * h * w + sy as usize * w + sx as usize];
                            }
                        }
                    }
                    out[co * h * w + y * w + xx] = acc.max(0.0);
                }
            }
        }
        out
    }

    #[test]
    fn param_layout() {
        let arch = Architecture::default();
        assert_eq!(arch.param_count(), 864 + 32 + 9216 + 32 + 9216 + 32 + 31 * 32 + 31 + 32 + 1);
        assert_eq!(arch.tensors()[6].name, "policy.weight");
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = PolicyValueNet::zeros(Architecture::default()).unwrap();
        let out = net.forward(&random_image(1, 8, 8)).unwrap();
        assert!(out.logits.data.iter().all(|&v| v == 0.0));
        assert!(out.values.values().iter().all(|&v| v == 0.0));
        for p in out.logits.probabilities(5) {
            assert!((p - 1.0 / 31.0).abs() < 1e-15);
        }
    }

    #[test]
    fn output_shapes_and_determinism() {
        let net = PolicyValueNet::init(Architecture::default(), 3).unwrap();
        let img = random_image(2, 16, 24);
        let a = net.forward(&img).unwrap();
        let b = net.forward(&img).unwrap();
        assert_eq!((a.logits.height, a.logits.width, a.logits.data.len()), (16, 24, 16 * 24 * 31));
        assert_eq!(a.values.dims(), (16, 24));
        assert_eq!(a.logits, b.logits);
        for cell in [0, 100, 383] {
            let s: f64 = a.logits.probabilities(cell).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_small_input_and_bad_params() {
        let mut net = PolicyValueNet::init(Architecture::tiny(), 1).unwrap();
        assert!(matches!(net.forward(&random_image(1, 7, 8)), Err(Error::DimensionTooSmall { .. })));
        net.params_mut()[0] = f64::NAN;
        assert!(matches!(net.forward(&random_image(1, 8, 8)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn im2col_conv_matches_direct_convolution() {
        let net = PolicyValueNet::init(Architecture::tiny(), 11).unwrap();
        let img = random_image(4, 9, 11);
        let (_, cache) = net.forward_cached(&img).unwrap();
        let x = img.to_planar();
        let weight = &net.params()[..4 * 27];
        let bias = &net.params()[4 * 27..4 * 28];
        let direct = naive_conv(&x, 3, 9, 11, weight, bias);
        for (a, b) in direct.iter().zip(&cache.inputs[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (ch, h, w) = (2, 8, 9);
        let x: Vec<f64> = (0..ch * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..ch * 9 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut cols = Vec::new();
        im2col(&x, ch, h, w, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&c, ch, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let net = PolicyValueNet::init(Architecture::default(), 5).unwrap();
        let mut off = 0;
        for t in net.architecture().tensors() {
            let fan_in: usize = if t.shape.len() > 1 { t.shape[1..].iter().product() } else { 0 };
            if fan_in > 0 {
                let bound = (1.0 / fan_in as f64).sqrt();
                assert!(net.params()[off..off + t.len()].iter().all(|v| v.abs() <= bound));
            }
            off += t.len();
        }
    }
}
