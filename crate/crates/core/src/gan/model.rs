use serde::{Deserialize, Serialize};

use super::nn::{self, Cache, Conv, ConvTranspose, InstanceNorm, Layer, ParamLayout};
use super::real::Real;
use super::tensor::Tensor;
use super::NUM_DOMAINS;

/// Architecture and optimization settings. Stored verbatim in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    /// Side length of the square training images.
    pub image_size: usize,
    /// Channels of the first generator stage; doubled by each downsampling stage.
    pub g_width: usize,
    pub g_res_blocks: usize,
    /// Kernel of the generator's first and last convolution.
    pub g_edge_kernel: usize,
    pub d_width: usize,
    /// Stride-2 convolutions in the discriminator trunk.
    pub d_layers: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_cls: f64,
    pub lambda_rec: f64,
    pub batch_size: usize,
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            image_size: 128,
            g_width: 64,
            g_res_blocks: 6,
            g_edge_kernel: 7,
            d_width: 64,
            d_layers: 6,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_cls: 1.0,
            lambda_rec: 10.0,
            batch_size: 16,
            flip_prob: 0.5,
            seed: 0,
        }
    }
}

impl GanConfig {
    /// Reduced configuration for CPU-scale training on 64x64 faces.
    ///
    /// The domain and cycle weights are raised so that both take hold within
    /// a few hundred steps.
    pub fn smoke() -> Self {
        GanConfig {
            image_size: 64,
            g_width: 12,
            g_res_blocks: 2,
            g_edge_kernel: 3,
            d_width: 16,
            d_layers: 4,
            lambda_cls: 3.0,
            lambda_rec: 20.0,
            ..GanConfig::default()
        }
    }

    /// Spatial side of the discriminator's final feature map.
    pub fn d_final_size(&self) -> usize {
        self.image_size >> self.d_layers
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.image_size < 4 || self.image_size % 4 != 0 {
            return Err(format!("image_size {} must be a positive multiple of 4", self.image_size));
        }
        if self.d_layers == 0 || self.image_size % (1 << self.d_layers) != 0 {
            return Err(format!("image_size {} is not divisible by 2^{}", self.image_size, self.d_layers));
        }
        if self.g_width == 0 || self.d_width == 0 || self.batch_size == 0 {
            return Err("widths and batch size must be positive".into());
        }
        if self.g_edge_kernel % 2 == 0 {
            return Err(format!("g_edge_kernel {} must be odd", self.g_edge_kernel));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(format!("flip_prob {} outside [0, 1]", self.flip_prob));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("optimizer settings out of range".into());
        }
        Ok(())
    }
}

/// Image plus tiled domain in, image out; instance-normalized encoder, residual
/// trunk and decoder with a tanh head.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub layout: ParamLayout,
    pub layers: Vec<Layer>,
}

impl Generator {
    pub fn new(cfg: &GanConfig) -> Generator {
        let mut l = ParamLayout::default();
        let w = cfg.g_width;
        let k = cfg.g_edge_kernel;
        let mut layers = vec![
            Layer::Conv(Conv::new(&mut l, "g.in", 3 + NUM_DOMAINS, w, k, 1, k / 2, false)),
            Layer::Norm(InstanceNorm::new(&mut l, "g.in_norm", w, true)),
            Layer::Relu,
        ];
        let mut c = w;
        for i in 0..2 {
            layers.push(Layer::Conv(Conv::new(&mut l, &format!("g.down{i}"), c, 2 * c, 4, 2, 1, false)));
            layers.push(Layer::Norm(InstanceNorm::new(&mut l, &format!("g.down{i}_norm"), 2 * c, true)));
            layers.push(Layer::Relu);
            c *= 2;
        }
        for i in 0..cfg.g_res_blocks {
            layers.push(Layer::Residual(vec![
                Layer::Conv(Conv::new(&mut l, &format!("g.res{i}.a"), c, c, 3, 1, 1, false)),
                Layer::Norm(InstanceNorm::new(&mut l, &format!("g.res{i}.a_norm"), c, false)),
                Layer::Relu,
                Layer::Conv(Conv::new(&mut l, &format!("g.res{i}.b"), c, c, 3, 1, 1, false)),
                Layer::Norm(InstanceNorm::new(&mut l, &format!("g.res{i}.b_norm"), c, false)),
            ]));
        }
        for i in 0..2 {
            layers.push(Layer::ConvTranspose(ConvTranspose::new(&mut l, &format!("g.up{i}"), c, c / 2, 4, 2, 1)));
            layers.push(Layer::Norm(InstanceNorm::new(&mut l, &format!("g.up{i}_norm"), c / 2, true)));
            layers.push(Layer::Relu);
            c /= 2;
        }
        layers.push(Layer::Conv(Conv::new(&mut l, "g.out", c, 3, k, 1, k / 2, true)));
        layers.push(Layer::Tanh);
        Generator { layout: l, layers }
    }

    /// `x` is `n x 3 x h x w`; `domains` holds one target code per sample.
    pub fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>, domains: &[usize]) -> (Tensor<F>, Vec<Cache<F>>) {
        nn::forward(&self.layers, p, condition(x, domains))
    }

    pub fn infer<F: Real>(&self, p: &[F], x: &Tensor<F>, domains: &[usize]) -> Tensor<F> {
        self.forward(p, x, domains).0
    }

    /// Returns the gradient with respect to the image channels only.
    pub fn backward<F: Real>(&self, p: &[F], caches: &[Cache<F>], dy: Tensor<F>, g: &mut [F]) -> Tensor<F> {
        nn::backward(&self.layers, p, caches, dy, g).leading_channels(3)
    }
}

/// Appends a one-hot domain map to every sample's channels.
pub fn condition<F: Real>(x: &Tensor<F>, domains: &[usize]) -> Tensor<F> {
    assert_eq!(x.n, domains.len(), "one domain per sample");
    let mut labels = Tensor::zeros(x.n, NUM_DOMAINS, x.h, x.w);
    let np = x.plane();
    for (i, &d) in domains.iter().enumerate() {
        assert!(d < NUM_DOMAINS, "domain code {d} out of range");
        labels.sample_mut(i)[d * np..(d + 1) * np].fill(F::one());
    }
    x.concat_channels(&labels)
}

/// Outputs of one discriminator pass.
#[derive(Debug, Clone)]
pub struct DiscOutput<F> {
    /// Patch realness logits, `n x 1 x s x s`.
    pub src: Tensor<F>,
    /// Domain logits, `n x 7`.
    pub cls: Tensor<F>,
}

#[derive(Debug, Clone)]
pub struct DiscCache<F> {
    trunk: Vec<Cache<F>>,
    src: Vec<Cache<F>>,
    cls: Vec<Cache<F>>,
}

/// Unnormalized stride-2 trunk with a patch realness head and a domain head.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub layout: ParamLayout,
    pub trunk: Vec<Layer>,
    pub src_head: Vec<Layer>,
    pub cls_head: Vec<Layer>,
}

impl Discriminator {
    pub fn new(cfg: &GanConfig) -> Discriminator {
        let mut l = ParamLayout::default();
        let mut trunk = Vec::new();
        let (mut cin, mut cout) = (3, cfg.d_width);
        for i in 0..cfg.d_layers {
            trunk.push(Layer::Conv(Conv::new(&mut l, &format!("d.conv{i}"), cin, cout, 4, 2, 1, true)));
            trunk.push(Layer::LeakyRelu(0.01));
            cin = cout;
            cout *= 2;
        }
        let src_head = vec![Layer::Conv(Conv::new(&mut l, "d.src", cin, 1, 3, 1, 1, false))];
        let s = cfg.d_final_size();
        let cls_head = vec![Layer::Conv(Conv::new(&mut l, "d.cls", cin, NUM_DOMAINS, s, 1, 0, false))];
        Discriminator { layout: l, trunk, src_head, cls_head }
    }

    pub fn forward<F: Real>(&self, p: &[F], x: &Tensor<F>) -> (DiscOutput<F>, DiscCache<F>) {
        let (h, trunk) = nn::forward(&self.trunk, p, x.clone());
        let (src, src_c) = nn::forward(&self.src_head, p, h.clone());
        let (cls, cls_c) = nn::forward(&self.cls_head, p, h);
        let cls = Tensor::from_vec(cls.n, NUM_DOMAINS, 1, 1, cls.data);
        (DiscOutput { src, cls }, DiscCache { trunk, src: src_c, cls: cls_c })
    }

    pub fn infer<F: Real>(&self, p: &[F], x: &Tensor<F>) -> DiscOutput<F> {
        self.forward(p, x).0
    }

    /// Backpropagates both head gradients; returns the input gradient.
    pub fn backward<F: Real>(&self, p: &[F], cache: &DiscCache<F>, d_src: Tensor<F>, d_cls: Tensor<F>, g: &mut [F]) -> Tensor<F> {
        let mut dh = nn::backward(&self.src_head, p, &cache.src, d_src, g);
        dh.add_assign(&nn::backward(&self.cls_head, p, &cache.cls, d_cls, g));
        nn::backward(&self.trunk, p, &cache.trunk, dh, g)
    }
}
