//! Layers with hand-written backward passes over a flat parameter buffer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::real::{matmul, matmul_abt_into_t, Real};
use super::tensor::{col2im, im2col, Tensor};

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Normal(f64),
    Const(f64),
}

/// A named tensor inside a flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    pub specs: Vec<ParamSpec>,
    pub len: usize,
}

impl ParamLayout {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.len;
        let spec = ParamSpec { name, shape, offset, init };
        self.len += spec.len();
        self.specs.push(spec);
        offset
    }

    /// Draws initial values: normal weights, constant scales and shifts.
    pub fn init<F: Real>(&self, rng: &mut impl Rng) -> Vec<F> {
        let mut out = vec![F::zero(); self.len];
        for spec in &self.specs {
            match spec.init {
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("valid std");
                    for v in &mut out[spec.range()] {
                        *v = F::c(dist.sample(rng));
                    }
                }
                Init::Const(c) => out[spec.range()].fill(F::c(c)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: usize,
    pub bias: Option<usize>,
}

impl Conv {
    /// Registers a `cout x cin x k x k` kernel (and optional bias) under `name`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, bias: bool) -> Conv {
        let weight = layout.add(format!("{name}.weight"), vec![cout, cin, k, k], Init::Normal(0.02));
        let bias = bias.then(|| layout.add(format!("{name}.bias"), vec![cout], Init::Const(0.0)));
        Conv { cin, cout, k, stride, pad, weight, bias }
    }

    fn out_size(&self, h: usize) -> usize {
        (h + 2 * self.pad - self.k) / self.stride + 1
    }

    fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> Tensor<F> {
        assert_eq!(x.c, self.cin, "conv input channels");
        assert!(x.h + 2 * self.pad >= self.k && x.w + 2 * self.pad >= self.k, "conv input too small");
        let (ho, wo) = (self.out_size(x.h), self.out_size(x.w));
        let kk = self.cin * self.k * self.k;
        let np = ho * wo;
        let w = &p[self.weight..self.weight + self.cout * kk];
        let mut out = Tensor::zeros(x.n, self.cout, ho, wo);
        let mut cols = vec![F::zero(); kk * np];
        for i in 0..x.n {
            im2col(x.sample(i), self.cin, x.h, x.w, self.k, self.stride, self.pad, ho, wo, &mut cols);
            let y = out.sample_mut(i);
            matmul(self.cout, kk, np, w, false, &cols, false, y, false);
            if let Some(b) = self.bias {
                for (o, plane) in y.chunks_mut(np).enumerate() {
                    let bv = p[b + o];
                    plane.iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        }
        out
    }

    fn backward<F: Real>(&self, p: &[F], x: &Tensor<F>, dy: &Tensor<F>, g: &mut [F]) -> Tensor<F> {
        let (ho, wo) = (dy.h, dy.w);
        let kk = self.cin * self.k * self.k;
        let np = ho * wo;
        let w = &p[self.weight..self.weight + self.cout * kk];
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut cols = vec![F::zero(); kk * np];
        let mut dcols = vec![F::zero(); kk * np];
        for i in 0..x.n {
            let dyi = dy.sample(i);
            im2col(x.sample(i), self.cin, x.h, x.w, self.k, self.stride, self.pad, ho, wo, &mut cols);
            matmul_abt_into_t(kk, np, self.cout, &cols, dyi, &mut g[self.weight..self.weight + self.cout * kk]);
            if let Some(b) = self.bias {
                for (o, plane) in dyi.chunks(np).enumerate() {
                    g[b + o] = plane.iter().fold(g[b + o], |a, &v| a + v);
                }
            }
            matmul(kk, self.cout, np, w, true, dyi, false, &mut dcols, false);
            col2im(&dcols, self.cin, x.h, x.w, self.k, self.stride, self.pad, ho, wo, dx.sample_mut(i));
        }
        dx
    }
}

/// Transposed convolution; the kernel is stored `cin x cout x k x k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvTranspose {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: usize,
}

impl ConvTranspose {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> ConvTranspose {
        let weight = layout.add(format!("{name}.weight"), vec![cin, cout, k, k], Init::Normal(0.02));
        ConvTranspose { cin, cout, k, stride, pad, weight }
    }

    fn out_size(&self, h: usize) -> usize {
        (h - 1) * self.stride + self.k - 2 * self.pad
    }

    fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> Tensor<F> {
        assert_eq!(x.c, self.cin, "transposed conv input channels");
        let (ho, wo) = (self.out_size(x.h), self.out_size(x.w));
        let kk = self.cout * self.k * self.k;
        let np = x.h * x.w;
        let w = &p[self.weight..self.weight + self.cin * kk];
        let mut out = Tensor::zeros(x.n, self.cout, ho, wo);
        let mut cols = vec![F::zero(); kk * np];
        for i in 0..x.n {
            matmul(kk, self.cin, np, w, true, x.sample(i), false, &mut cols, false);
            col2im(&cols, self.cout, ho, wo, self.k, self.stride, self.pad, x.h, x.w, out.sample_mut(i));
        }
        out
    }

    fn backward<F: Real>(&self, p: &[F], x: &Tensor<F>, dy: &Tensor<F>, g: &mut [F]) -> Tensor<F> {
        let kk = self.cout * self.k * self.k;
        let np = x.h * x.w;
        let w = &p[self.weight..self.weight + self.cin * kk];
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut dcols = vec![F::zero(); kk * np];
        for i in 0..x.n {
            im2col(dy.sample(i), self.cout, dy.h, dy.w, self.k, self.stride, self.pad, x.h, x.w, &mut dcols);
            matmul_abt_into_t(kk, np, self.cin, &dcols, x.sample(i), &mut g[self.weight..self.weight + self.cin * kk]);
            matmul(self.cin, kk, np, w, false, &dcols, false, dx.sample_mut(i), false);
        }
        dx
    }
}

/// Per-sample, per-channel normalization with an optional learned scale and shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceNorm {
    pub channels: usize,
    pub affine: Option<(usize, usize)>,
}

impl InstanceNorm {
    pub fn new(layout: &mut ParamLayout, name: &str, channels: usize, affine: bool) -> InstanceNorm {
        let affine = affine.then(|| {
            let gamma = layout.add(format!("{name}.gamma"), vec![channels], Init::Const(1.0));
            let beta = layout.add(format!("{name}.beta"), vec![channels], Init::Const(0.0));
            (gamma, beta)
        });
        InstanceNorm { channels, affine }
    }

    fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> (Tensor<F>, Tensor<F>, Vec<F>) {
        let np = x.plane();
        let count = F::c(np as f64);
        let eps = F::c(NORM_EPS);
        let mut xhat = x.clone();
        let mut inv = Vec::with_capacity(x.n * x.c);
        for plane in xhat.data.chunks_mut(np) {
            let mean = plane.iter().fold(F::zero(), |a, &v| a + v) / count;
            let var = plane.iter().fold(F::zero(), |a, &v| a + (v - mean) * (v - mean)) / count;
            let s = F::one() / (var + eps).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv.push(s);
        }
        let y = match self.affine {
            None => xhat.clone(),
            Some((gi, bi)) => {
                let mut y = xhat.clone();
                for (j, plane) in y.data.chunks_mut(np).enumerate() {
                    let ch = j % self.channels;
                    let (gv, bv) = (p[gi + ch], p[bi + ch]);
                    plane.iter_mut().for_each(|v| *v = *v * gv + bv);
                }
                y
            }
        };
        (y, xhat, inv)
    }

    fn backward<F: Real>(&self, p: &[F], xhat: &Tensor<F>, inv: &[F], dy: &Tensor<F>, g: &mut [F]) -> Tensor<F> {
        let np = dy.plane();
        let count = F::c(np as f64);
        let mut dx = dy.clone();
        for (j, (plane, xh)) in dx.data.chunks_mut(np).zip(xhat.data.chunks(np)).enumerate() {
            let ch = j % self.channels;
            if let Some((gi, bi)) = self.affine {
                let (mut dg, mut db) = (F::zero(), F::zero());
                for (&d, &h) in plane.iter().zip(xh) {
                    dg = dg + d * h;
                    db = db + d;
                }
                g[gi + ch] = g[gi + ch] + dg;
                g[bi + ch] = g[bi + ch] + db;
                let gv = p[gi + ch];
                plane.iter_mut().for_each(|v| *v = *v * gv);
            }
            let (mut sum, mut dot) = (F::zero(), F::zero());
            for (&d, &h) in plane.iter().zip(xh) {
                sum = sum + d;
                dot = dot + d * h;
            }
            let (mean, mean_dot) = (sum / count, dot / count);
            for (v, &h) in plane.iter_mut().zip(xh) {
                *v = inv[j] * (*v - mean - h * mean_dot);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv),
    ConvTranspose(ConvTranspose),
    Norm(InstanceNorm),
    Relu,
    LeakyRelu(f64),
    Tanh,
    /// `x + f(x)` for the inner sequence `f`.
    Residual(Vec<Layer>),
}

#[derive(Debug, Clone)]
pub enum Cache<F> {
    Input(Tensor<F>),
    Output(Tensor<F>),
    Norm(Tensor<F>, Vec<F>),
    Residual(Vec<Cache<F>>),
}

/// Runs `layers` in order, returning the output and the caches needed by [`backward`].
pub fn forward<F: Real>(layers: &[Layer], p: &[F], x: Tensor<F>) -> (Tensor<F>, Vec<Cache<F>>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = x;
    for layer in layers {
        let (y, cache) = match layer {
            Layer::Conv(c) => (c.forward(p, &h), Cache::Input(h)),
            Layer::ConvTranspose(c) => (c.forward(p, &h), Cache::Input(h)),
            Layer::Norm(n) => {
                let (y, xhat, inv) = n.forward(p, &h);
                (y, Cache::Norm(xhat, inv))
            }
            Layer::Relu => {
                let y = h.map(|v| v.max(F::zero()));
                (y.clone(), Cache::Output(y))
            }
            Layer::LeakyRelu(slope) => {
                let s = F::c(*slope);
                let y = h.map(|v| if v > F::zero() { v } else { v * s });
                (y.clone(), Cache::Output(y))
            }
            Layer::Tanh => {
                let y = h.map(|v| v.tanh());
                (y.clone(), Cache::Output(y))
            }
            Layer::Residual(inner) => {
                let (mut y, inner_caches) = forward(inner, p, h.clone());
                y.add_assign(&h);
                (y, Cache::Residual(inner_caches))
            }
        };
        caches.push(cache);
        h = y;
    }
    (h, caches)
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
pub fn backward<F: Real>(layers: &[Layer], p: &[F], caches: &[Cache<F>], dy: Tensor<F>, g: &mut [F]) -> Tensor<F> {
    let mut d = dy;
    for (layer, cache) in layers.iter().zip(caches).rev() {
        d = match (layer, cache) {
            (Layer::Conv(c), Cache::Input(x)) => c.backward(p, x, &d, g),
            (Layer::ConvTranspose(c), Cache::Input(x)) => c.backward(p, x, &d, g),
            (Layer::Norm(n), Cache::Norm(xhat, inv)) => n.backward(p, xhat, inv, &d, g),
            (Layer::Relu, Cache::Output(y)) => {
                for (dv, &yv) in d.data.iter_mut().zip(&y.data) {
                    if yv <= F::zero() {
                        *dv = F::zero();
                    }
                }
                d
            }
            (Layer::LeakyRelu(slope), Cache::Output(y)) => {
                let s = F::c(*slope);
                for (dv, &yv) in d.data.iter_mut().zip(&y.data) {
                    if yv <= F::zero() {
                        *dv = *dv * s;
                    }
                }
                d
            }
            (Layer::Tanh, Cache::Output(y)) => {
                for (dv, &yv) in d.data.iter_mut().zip(&y.data) {
                    *dv = *dv * (F::one() - yv * yv);
                }
                d
            }
            (Layer::Residual(inner), Cache::Residual(inner_caches)) => {
                let mut dx = backward(inner, p, inner_caches, d.clone(), g);
                dx.add_assign(&d);
                dx
            }
            _ => unreachable!("cache does not match layer"),
        };
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &Tensor<f64>, w: &[f64], cout: usize, k: usize, s: usize, pad: usize) -> Tensor<f64> {
        let ho = (x.h + 2 * pad - k) / s + 1;
        let wo = (x.w + 2 * pad - k) / s + 1;
        let mut out = Tensor::zeros(x.n, cout, ho, wo);
        for n in 0..x.n {
            for o in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for c in 0..x.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - pad as isize;
                                    let ix = (ox * s + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                        let xv = x.data[((n * x.c + c) * x.h + iy as usize) * x.w + ix as usize];
                                        acc += xv * w[((o * x.c + c) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out.data[((n * cout + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 37 % 101) as f64 / 101.0 - 0.5) * scale).collect()
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut layout = ParamLayout::default();
        let conv = Conv::new(&mut layout, "c", 2, 3, 4, 2, 1, false);
        let p = ramp(layout.len, 1.0);
        let x = Tensor::from_vec(2, 2, 6, 6, ramp(144, 2.0));
        let y = conv.forward(&p, &x);
        let expect = naive_conv(&x, &p, 3, 4, 2, 1);
        assert_eq!(y.shape(), [2, 3, 3, 3]);
        for (a, b) in y.data.iter().zip(&expect.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // With shared kernel storage, <conv(x), y> == <x, convT(y)>.
        let mut layout = ParamLayout::default();
        let conv = Conv::new(&mut layout, "c", 3, 2, 4, 2, 1, false);
        let convt = ConvTranspose { cin: 2, cout: 3, k: 4, stride: 2, pad: 1, weight: conv.weight };
        let p = ramp(layout.len, 1.0);
        let x = Tensor::from_vec(1, 3, 8, 8, ramp(192, 1.0));
        let y = Tensor::from_vec(1, 2, 4, 4, ramp(32, 3.0));
        let cx = conv.forward(&p, &x);
        let ty = convt.forward(&p, &y);
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&ty.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn instance_norm_zero_mean_unit_variance() {
        let mut layout = ParamLayout::default();
        let norm = InstanceNorm::new(&mut layout, "n", 2, false);
        let x = Tensor::from_vec(2, 2, 3, 3, ramp(36, 5.0));
        let (y, _, _) = norm.forward::<f64>(&[], &x);
        for plane in y.data.chunks(9) {
            let mean: f64 = plane.iter().sum::<f64>() / 9.0;
            let var: f64 = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn layer_stack_gradients_match_finite_differences() {
        let mut layout = ParamLayout::default();
        let layers = vec![
            Layer::Conv(Conv::new(&mut layout, "a", 2, 3, 3, 1, 1, true)),
            Layer::Norm(InstanceNorm::new(&mut layout, "an", 3, true)),
            Layer::LeakyRelu(0.1),
            Layer::Residual(vec![
                Layer::Conv(Conv::new(&mut layout, "r", 3, 3, 3, 1, 1, false)),
                Layer::Norm(InstanceNorm::new(&mut layout, "rn", 3, false)),
            ]),
            Layer::ConvTranspose(ConvTranspose::new(&mut layout, "t", 3, 2, 4, 2, 1)),
            Layer::Tanh,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p: Vec<f64> = layout.init(&mut rng);
        for v in p.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let x = Tensor::from_vec(2, 2, 4, 4, ramp(64, 2.0));
        let target = ramp(2 * 2 * 8 * 8, 1.0);
        let loss = |p: &[f64]| -> f64 {
            let y = forward(&layers, p, x.clone()).0;
            y.data.iter().zip(&target).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
        };
        let (y, caches) = forward(&layers, &p, x.clone());
        let dy = Tensor::from_vec(y.n, y.c, y.h, y.w, y.data.iter().zip(&target).map(|(a, b)| a - b).collect());
        let mut g = vec![0.0; layout.len];
        backward(&layers, &p, &caches, dy, &mut g);
        let h = 1e-6;
        for i in 0..layout.len {
            let mut q = p.clone();
            q[i] += h;
            let up = loss(&q);
            q[i] -= 2.0 * h;
            let down = loss(&q);
            let num = (up - down) / (2.0 * h);
            let err = (num - g[i]).abs() / (num.abs() + g[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: analytic {} numeric {num}", g[i]);
        }
    }
}
