//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Rectified-linear hidden layers, an optional tanh on the output, Xavier
//! initialization, a bias-corrected Adam optimizer, and global-norm
//! gradient clipping. Everything operates on flat row-major batches so the
//! inner loops reduce to contiguous dot products and axpy updates.

use crate::math;
use crate::rng::RngStream;
use alloc::vec;
use alloc::vec::Vec;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    let (a4, a_tail) = a.split_at(chunks * 4);
    let (b4, b_tail) = b.split_at(chunks * 4);
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a_tail.iter().zip(b_tail) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(dst: &mut [f64], src: &[f64], scale: f64) {
    debug_assert_eq!(dst.len(), src.len());
    let chunks = dst.len() / 4;
    let (d4, d_tail) = dst.split_at_mut(chunks * 4);
    let (s4, s_tail) = src.split_at(chunks * 4);
    for (d, s) in d4.chunks_exact_mut(4).zip(s4.chunks_exact(4)) {
        d[0] += scale * s[0];
        d[1] += scale * s[1];
        d[2] += scale * s[2];
        d[3] += scale * s[3];
    }
    for (d, s) in d_tail.iter_mut().zip(s_tail) {
        *d += scale * s;
    }
}

/// One affine layer with row-major `out_dim x in_dim` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Multilayer perceptron: rectified-linear hidden layers, output either
/// linear or squashed by tanh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output_tanh: bool,
}

/// Forward-pass bookkeeping for the matching backward pass. Reusable: a
/// cache fed back into [`Mlp::forward_into`] recycles its buffers, which
/// keeps the training loop free of large allocations.
#[derive(Default)]
pub struct Cache {
    /// Input batch of each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    /// Final activations.
    pub output: Vec<f64>,
    batch: usize,
}

/// Reusable buffers for [`Mlp::backward_into`]; `dx` holds the input
/// gradient after the call.
#[derive(Default)]
pub struct BackwardScratch {
    pub dx: Vec<f64>,
    dz: Vec<f64>,
}

/// Parameter-shaped gradients.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Mlp {
    /// Xavier-uniform initialization: weights on
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn xavier(sizes: &[usize], output_tanh: bool, rng: &mut RngStream) -> Self {
        debug_assert!(sizes.len() >= 2);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let w = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            layers.push(Dense {
                w,
                b: vec![0.0; fan_out],
                in_dim: fan_in,
                out_dim: fan_out,
            });
        }
        Self { layers, output_tanh }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Batched forward pass returning the activations and the cache needed
    /// by [`Mlp::backward`]. `x` holds `batch` rows of `in_dim` values.
    pub fn forward(&self, x: &[f64], batch: usize) -> Cache {
        let mut cache = Cache::default();
        self.forward_into(x, batch, &mut cache);
        cache
    }

    /// Forward pass into a reusable cache.
    pub fn forward_into(&self, x: &[f64], batch: usize, cache: &mut Cache) {
        debug_assert_eq!(x.len(), batch * self.in_dim());
        let depth = self.layers.len();
        cache.batch = batch;
        cache.inputs.resize_with(depth, Vec::new);
        cache.pre.resize_with(depth, Vec::new);
        set_from(&mut cache.inputs[0], x);
        for li in 0..depth {
            let layer = &self.layers[li];
            // split so the layer input and its destination can be borrowed
            // together
            let (head, tail) = cache.inputs.split_at_mut(li + 1);
            let input = &head[li];
            let z = &mut cache.pre[li];
            layer.affine_into(input, batch, z);
            let last = li + 1 == depth;
            if last {
                let out = &mut cache.output;
                out.clear();
                if self.output_tanh {
                    out.extend(z.iter().map(|&v| math::tanh(v)));
                } else {
                    out.extend_from_slice(z);
                }
            } else {
                let next = &mut tail[0];
                next.clear();
                next.extend(z.iter().map(|&v| v.max(0.0)));
            }
        }
    }

    /// Inference-only forward pass.
    pub fn infer(&self, x: &[f64], batch: usize) -> Vec<f64> {
        self.forward(x, batch).output
    }

    /// Exact gradients of a scalar loss whose output gradient is `dy`;
    /// returns parameter gradients and the gradient at the network input.
    pub fn backward(&self, cache: &Cache, dy: &[f64]) -> (MlpGrads, Vec<f64>) {
        let mut grads = self.zero_grads();
        let mut scratch = BackwardScratch::default();
        self.backward_into(cache, dy, &mut grads, &mut scratch);
        let dx = core::mem::take(&mut scratch.dx);
        (grads, dx)
    }

    /// Backward pass into reusable gradient and scratch buffers. `grads` is
    /// overwritten; the input gradient lands in `scratch.dx`.
    pub fn backward_into(
        &self,
        cache: &Cache,
        dy: &[f64],
        grads: &mut MlpGrads,
        scratch: &mut BackwardScratch,
    ) {
        let batch = cache.batch;
        let depth = self.layers.len();
        debug_assert_eq!(dy.len(), batch * self.out_dim());
        debug_assert_eq!(grads.layers.len(), depth);
        grads.zero();

        // gradient at the last layer's pre-activation
        let dz = &mut scratch.dz;
        dz.clear();
        if self.output_tanh {
            dz.extend(
                dy.iter()
                    .zip(&cache.output)
                    .map(|(&g, &a)| g * (1.0 - a * a)),
            );
        } else {
            dz.extend_from_slice(dy);
        }

        for li in (0..depth).rev() {
            let layer = &self.layers[li];
            let g = &mut grads.layers[li];
            let x = &cache.inputs[li];
            let (ni, no) = (layer.in_dim, layer.out_dim);
            {
                let BackwardScratch { dx, dz } = &mut *scratch;
                for s in 0..batch {
                    let x_row = &x[s * ni..(s + 1) * ni];
                    let dz_row = &dz[s * no..(s + 1) * no];
                    for o in 0..no {
                        let d = dz_row[o];
                        if d != 0.0 {
                            g.b[o] += d;
                            axpy(&mut g.w[o * ni..(o + 1) * ni], x_row, d);
                        }
                    }
                }

                // gradient at the layer input, masked by the rectifier of
                // the layer below
                dx.clear();
                dx.resize(batch * ni, 0.0);
                for s in 0..batch {
                    let dz_row = &dz[s * no..(s + 1) * no];
                    let dx_row = &mut dx[s * ni..(s + 1) * ni];
                    for o in 0..no {
                        let d = dz_row[o];
                        if d != 0.0 {
                            axpy(dx_row, &layer.w[o * ni..(o + 1) * ni], d);
                        }
                    }
                }
                if li > 0 {
                    let z_below = &cache.pre[li - 1];
                    for (v, &z) in dx.iter_mut().zip(z_below) {
                        if z <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            core::mem::swap(&mut scratch.dz, &mut scratch.dx);
        }
        // the final input gradient ended up in dz after the last swap
        core::mem::swap(&mut scratch.dz, &mut scratch.dx);
    }

    /// Input gradient only, leaving parameters untouched; for when this
    /// network sits inside another network's loss. The result lands in
    /// `scratch.dx`.
    pub fn backward_input_into(
        &self,
        cache: &Cache,
        dy: &[f64],
        scratch: &mut BackwardScratch,
    ) {
        let batch = cache.batch;
        let depth = self.layers.len();
        debug_assert_eq!(dy.len(), batch * self.out_dim());

        let dz = &mut scratch.dz;
        dz.clear();
        if self.output_tanh {
            dz.extend(
                dy.iter()
                    .zip(&cache.output)
                    .map(|(&g, &a)| g * (1.0 - a * a)),
            );
        } else {
            dz.extend_from_slice(dy);
        }

        for li in (0..depth).rev() {
            let layer = &self.layers[li];
            let (ni, no) = (layer.in_dim, layer.out_dim);
            {
                let BackwardScratch { dx, dz } = &mut *scratch;
                dx.clear();
                dx.resize(batch * ni, 0.0);
                for s in 0..batch {
                    let dz_row = &dz[s * no..(s + 1) * no];
                    let dx_row = &mut dx[s * ni..(s + 1) * ni];
                    for o in 0..no {
                        let d = dz_row[o];
                        if d != 0.0 {
                            axpy(dx_row, &layer.w[o * ni..(o + 1) * ni], d);
                        }
                    }
                }
                if li > 0 {
                    let z_below = &cache.pre[li - 1];
                    for (v, &z) in dx.iter_mut().zip(z_below) {
                        if z <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            core::mem::swap(&mut scratch.dz, &mut scratch.dx);
        }
        core::mem::swap(&mut scratch.dz, &mut scratch.dx);
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| DenseGrads {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    /// Visit every parameter and its optimizer slots in a fixed order.
    fn visit(&mut self, g: &MlpGrads, mut f: impl FnMut(&mut f64, f64)) {
        for (layer, lg) in self.layers.iter_mut().zip(&g.layers) {
            for (p, &d) in layer.w.iter_mut().zip(&lg.w) {
                f(p, d);
            }
            for (p, &d) in layer.b.iter_mut().zip(&lg.b) {
                f(p, d);
            }
        }
    }
}

fn set_from(dst: &mut Vec<f64>, src: &[f64]) {
    dst.clear();
    dst.extend_from_slice(src);
}

impl Dense {
    fn affine_into(&self, x: &[f64], batch: usize, z: &mut Vec<f64>) {
        let (ni, no) = (self.in_dim, self.out_dim);
        debug_assert_eq!(x.len(), batch * ni);
        z.clear();
        z.resize(batch * no, 0.0);
        // four samples per pass so each weight row is reused from registers
        let blocks = batch / 4;
        for blk in 0..blocks {
            let s = blk * 4;
            let x0 = &x[s * ni..(s + 1) * ni];
            let x1 = &x[(s + 1) * ni..(s + 2) * ni];
            let x2 = &x[(s + 2) * ni..(s + 3) * ni];
            let x3 = &x[(s + 3) * ni..(s + 4) * ni];
            for o in 0..no {
                let w_row = &self.w[o * ni..(o + 1) * ni];
                let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..ni {
                    let w = w_row[i];
                    a0 += w * x0[i];
                    a1 += w * x1[i];
                    a2 += w * x2[i];
                    a3 += w * x3[i];
                }
                let b = self.b[o];
                z[s * no + o] = b + a0;
                z[(s + 1) * no + o] = b + a1;
                z[(s + 2) * no + o] = b + a2;
                z[(s + 3) * no + o] = b + a3;
            }
        }
        for s in blocks * 4..batch {
            let x_row = &x[s * ni..(s + 1) * ni];
            let z_row = &mut z[s * no..(s + 1) * no];
            for o in 0..no {
                z_row[o] = self.b[o] + dot(&self.w[o * ni..(o + 1) * ni], x_row);
            }
        }
    }
}

impl MlpGrads {
    /// Flatten in fixed parameter order (per layer: weights then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for l in &self.layers {
            for &v in l.w.iter().chain(&l.b) {
                sq += v * v;
            }
        }
        math::sqrt(sq)
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v *= s;
            }
        }
    }
}

/// Scale the gradients so their global L2 norm does not exceed `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut MlpGrads, max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Bias-corrected Adam state shaped like one network's parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    m: MlpGrads,
    v: MlpGrads,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            m: net.zero_grads(),
            v: net.zero_grads(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.step += 1;
        let c1 = 1.0 - crate::math::powf(self.beta1, self.step as f64);
        let c2 = 1.0 - crate::math::powf(self.beta2, self.step as f64);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (li, lg) in grads.layers.iter().enumerate() {
            let (mw, vw) = (&mut self.m.layers[li], &mut self.v.layers[li]);
            update_slice(&mut net.layers[li].w, &lg.w, &mut mw.w, &mut vw.w, b1, b2, c1, c2, lr, eps);
            update_slice(&mut net.layers[li].b, &lg.b, &mut mw.b, &mut vw.b, b1, b2, c1, c2, lr, eps);
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Snapshot of the moment accumulators for checkpointing.
    pub fn export(&self) -> AdamDump {
        AdamDump {
            step: self.step,
            first_moment: self.m.flatten(),
            second_moment: self.v.flatten(),
        }
    }
}

/// Flattened Adam accumulators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamDump {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

/// Scalar-optimizer accumulators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarAdamDump {
    pub step: u64,
    pub first_moment: f64,
    pub second_moment: f64,
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    lr: f64,
    eps: f64,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        p[i] -= lr * mh / (math::sqrt(vh) + eps);
    }
}

/// Adam for a single scalar (the trainable log-temperature).
#[derive(Clone, Copy, Debug)]
pub struct ScalarAdam {
    m: f64,
    v: f64,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            m: 0.0,
            v: 0.0,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad;
        let mh = self.m / (1.0 - math::powf(self.beta1, self.step as f64));
        let vh = self.v / (1.0 - math::powf(self.beta2, self.step as f64));
        *param -= self.lr * mh / (math::sqrt(vh) + self.eps);
    }

    pub fn export(&self) -> ScalarAdamDump {
        ScalarAdamDump {
            step: self.step,
            first_moment: self.m,
            second_moment: self.v,
        }
    }
}
