use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{adversarial_loss, argmax_rows, bce_logits, cross_entropy, l1, sigmoid};
use super::model::{Discriminator, GanConfig, Generator};
use super::real::Real;
use super::tensor::Tensor;
use super::{FaceSet, GanError, NUM_DOMAINS};
use crate::optim::{Adam, AdamState};

/// Both networks, their optimizer moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct GanState<F> {
    pub config: GanConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_params: Vec<F>,
    pub d_params: Vec<F>,
    pub g_adam: AdamState<F>,
    pub d_adam: AdamState<F>,
    /// Completed training steps.
    pub step: u64,
}

/// Training state in the checkpoint precision.
pub type GanCheckpoint = GanState<f32>;

/// One training batch: real images with their domains and sampled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    pub images: Tensor<F>,
    pub labels: Vec<usize>,
    pub targets: Vec<usize>,
}

/// One line of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Value of the two-sided log-likelihood objective on this step's discriminator batch.
    pub adv: f64,
    /// Generator-side domain cross-entropy on translated images.
    pub cls: f64,
    /// Mean absolute reconstruction error after translating back.
    pub rec: f64,
}

/// Discriminator-side loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLoss {
    pub total: f64,
    pub real: f64,
    pub fake: f64,
    pub cls_real: f64,
    pub adv: f64,
}

/// Generator-side loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenLoss {
    pub total: f64,
    pub adv: f64,
    pub cls_fake: f64,
    pub rec: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub d: DiscLoss,
    pub g: GenLoss,
}

impl<F: Real> GanState<F> {
    /// Fresh networks with weights drawn from `config.seed`.
    pub fn new(config: GanConfig) -> Result<Self, GanError> {
        config.validate().map_err(GanError::Config)?;
        let generator = Generator::new(&config);
        let discriminator = Discriminator::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g_params = generator.layout.init(&mut rng);
        let d_params = discriminator.layout.init(&mut rng);
        Ok(GanState {
            g_adam: AdamState::zeros(g_params.len()),
            d_adam: AdamState::zeros(d_params.len()),
            config,
            generator,
            discriminator,
            g_params,
            d_params,
            step: 0,
        })
    }

    /// The same state in another precision.
    pub fn cast<G: Real>(&self) -> GanState<G> {
        let c = |v: &[F]| v.iter().map(|x| G::c(x.as_f64())).collect::<Vec<G>>();
        GanState {
            config: self.config.clone(),
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            g_params: c(&self.g_params),
            d_params: c(&self.d_params),
            g_adam: AdamState { m: c(&self.g_adam.m), v: c(&self.g_adam.v), t: self.g_adam.t },
            d_adam: AdamState { m: c(&self.d_adam.m), v: c(&self.d_adam.v), t: self.d_adam.t },
            step: self.step,
        }
    }

    fn adam(&self) -> Adam {
        Adam::new(self.config.lr, self.config.beta1, self.config.beta2)
    }

    /// Assembles the batch for `step` from `set`. Sample choice, target
    /// domains and flips depend only on the seed and the step number.
    pub fn batch_for_step(&self, set: &FaceSet, step: u64) -> Batch<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step);
        let n = self.config.batch_size.min(set.len());
        let picks = index::sample(&mut rng, set.len(), n).into_vec();
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..NUM_DOMAINS)).collect();
        let flips: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < self.config.flip_prob).collect();
        set.batch(&picks, &flips, targets)
    }

    pub fn generate(&self, x: &Tensor<F>, domains: &[usize]) -> Tensor<F> {
        self.generator.infer(&self.g_params, x, domains)
    }

    /// Domain-head predictions for each image.
    pub fn classify_domains(&self, x: &Tensor<F>) -> Vec<usize> {
        argmax_rows(&self.discriminator.infer(&self.d_params, x).cls)
    }

    /// Discriminator loss and its gradient with respect to `d_params`.
    pub fn disc_loss_grad(&self, batch: &Batch<F>) -> (DiscLoss, Vec<F>) {
        let d = &self.discriminator;
        let lambda_cls = F::c(self.config.lambda_cls);
        let fake = self.generate(&batch.images, &batch.targets);
        let (out_real, cache_real) = d.forward(&self.d_params, &batch.images);
        let (out_fake, cache_fake) = d.forward(&self.d_params, &fake);
        let (l_real, g_real) = bce_logits(&out_real.src, true);
        let (l_fake, g_fake) = bce_logits(&out_fake.src, false);
        let (ce, g_ce) = cross_entropy(&out_real.cls, &batch.labels);
        let mut grads = vec![F::zero(); self.d_params.len()];
        d.backward(&self.d_params, &cache_real, g_real, g_ce.map(|v| v * lambda_cls), &mut grads);
        let zero_cls = Tensor::zeros(out_fake.cls.n, NUM_DOMAINS, 1, 1);
        d.backward(&self.d_params, &cache_fake, g_fake, zero_cls, &mut grads);
        let probs = |z: &Tensor<F>| z.data.iter().map(|v| sigmoid(v.as_f64())).collect::<Vec<f64>>();
        let loss = DiscLoss {
            total: l_real.as_f64() + l_fake.as_f64() + self.config.lambda_cls * ce.as_f64(),
            real: l_real.as_f64(),
            fake: l_fake.as_f64(),
            cls_real: ce.as_f64(),
            adv: adversarial_loss(&probs(&out_real.src), &probs(&out_fake.src)),
        };
        (loss, grads)
    }

    /// Generator loss and its gradient with respect to `g_params`.
    pub fn gen_loss_grad(&self, batch: &Batch<F>) -> (GenLoss, Vec<F>) {
        let (g, d) = (&self.generator, &self.discriminator);
        let lambda_cls = F::c(self.config.lambda_cls);
        let lambda_rec = F::c(self.config.lambda_rec);
        let (fake, cache_fake) = g.forward(&self.g_params, &batch.images, &batch.targets);
        let (out, cache_d) = d.forward(&self.d_params, &fake);
        let (rec, cache_rec) = g.forward(&self.g_params, &fake, &batch.labels);
        let (adv, g_adv) = bce_logits(&out.src, true);
        let (ce, g_ce) = cross_entropy(&out.cls, &batch.targets);
        let (l_rec, g_rec) = l1(&rec, &batch.images);
        let mut grads = vec![F::zero(); self.g_params.len()];
        let mut scratch = vec![F::zero(); self.d_params.len()];
        let mut d_fake = d.backward(&self.d_params, &cache_d, g_adv, g_ce.map(|v| v * lambda_cls), &mut scratch);
        d_fake.add_assign(&g.backward(&self.g_params, &cache_rec, g_rec.map(|v| v * lambda_rec), &mut grads));
        g.backward(&self.g_params, &cache_fake, d_fake, &mut grads);
        let loss = GenLoss {
            total: adv.as_f64() + self.config.lambda_cls * ce.as_f64() + self.config.lambda_rec * l_rec.as_f64(),
            adv: adv.as_f64(),
            cls_fake: ce.as_f64(),
            rec: l_rec.as_f64(),
        };
        (loss, grads)
    }

    /// Both losses at the current parameters, without updating anything.
    pub fn objective(&self, batch: &Batch<F>) -> Objective {
        Objective { d: self.disc_loss_grad(batch).0, g: self.gen_loss_grad(batch).0 }
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, batch: &Batch<F>) -> StepMetrics {
        let adam = self.adam();
        let (d_loss, d_grads) = self.disc_loss_grad(batch);
        adam.step(&mut self.d_params, &d_grads, &mut self.d_adam);
        let (g_loss, g_grads) = self.gen_loss_grad(batch);
        adam.step(&mut self.g_params, &g_grads, &mut self.g_adam);
        self.step += 1;
        StepMetrics { step: self.step, d_loss: d_loss.total, g_loss: g_loss.total, adv: d_loss.adv, cls: g_loss.cls_fake, rec: g_loss.rec }
    }

    /// Runs `steps` further steps on `set`, reporting each step's metrics.
    pub fn train(&mut self, set: &FaceSet, steps: u64, mut on_step: impl FnMut(&StepMetrics)) -> Result<(), GanError> {
        if set.is_empty() {
            return Err(GanError::EmptyDataset);
        }
        if set.size() != self.config.image_size {
            return Err(GanError::BadShape(format!("dataset is {0}x{0}, model expects {1}x{1}", set.size(), self.config.image_size)));
        }
        for _ in 0..steps {
            let batch = self.batch_for_step(set, self.step);
            let m = self.train_step(&batch);
            on_step(&m);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::ExpressionDomain;

    fn tiny() -> GanConfig {
        GanConfig { image_size: 8, g_width: 4, g_res_blocks: 1, g_edge_kernel: 3, d_width: 4, d_layers: 2, batch_size: 3, seed: 11, ..GanConfig::default() }
    }

    fn tiny_set(n: usize, size: usize) -> FaceSet {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            for j in 0..3 * size * size {
                data.push((((i * 31 + j * 17) % 29) as f32 / 14.0) - 1.0);
            }
            labels.push(ExpressionDomain::ALL[i % NUM_DOMAINS]);
        }
        FaceSet::from_tensor(Tensor::from_vec(n, 3, size, size, data), labels).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
    }

    fn perturbed(mut state: GanState<f64>) -> GanState<f64> {
        // Move away from the symmetric init so every path carries signal.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for v in state.g_params.iter_mut().chain(state.d_params.iter_mut()) {
            *v += rng.random_range(-0.2..0.2);
        }
        state
    }

    #[test]
    fn disc_gradient_matches_finite_differences() {
        let state = perturbed(GanState::<f64>::new(tiny()).unwrap());
        let batch = state.batch_for_step(&tiny_set(5, 8), 0);
        let (_, grads) = state.disc_loss_grad(&batch);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in (0..grads.len()).step_by(7) {
            let mut s = state.clone();
            s.d_params[i] += h;
            let up = s.disc_loss_grad(&batch).0.total;
            s.d_params[i] -= 2.0 * h;
            let down = s.disc_loss_grad(&batch).0.total;
            worst = worst.max(rel_err((up - down) / (2.0 * h), grads[i]));
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn gen_gradient_matches_finite_differences() {
        let state = perturbed(GanState::<f64>::new(tiny()).unwrap());
        let batch = state.batch_for_step(&tiny_set(5, 8), 1);
        let (_, grads) = state.gen_loss_grad(&batch);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in (0..grads.len()).step_by(11) {
            let mut s = state.clone();
            s.g_params[i] += h;
            let up = s.gen_loss_grad(&batch).0.total;
            s.g_params[i] -= 2.0 * h;
            let down = s.gen_loss_grad(&batch).0.total;
            worst = worst.max(rel_err((up - down) / (2.0 * h), grads[i]));
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn zero_flip_probability_gives_unflipped_batches() {
        let set = tiny_set(6, 8);
        let mut cfg = tiny();
        cfg.flip_prob = 0.0;
        let state = GanState::<f32>::new(cfg).unwrap();
        let batch = state.batch_for_step(&set, 4);
        let picks = index::sample(&mut { let mut r = ChaCha8Rng::seed_from_u64(11); r.set_stream(4); r }, 6, 3).into_vec();
        let plain = set.batch::<f32>(&picks, &[false; 3], batch.targets.clone());
        assert_eq!(batch, plain);
    }

    #[test]
    fn training_is_deterministic() {
        let set = tiny_set(6, 8);
        let run = || {
            let mut s = GanState::<f32>::new(tiny()).unwrap();
            let mut log = Vec::new();
            s.train(&set, 2, |m| log.push(*m)).unwrap();
            (log, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(sa.step, 2);
    }

    #[test]
    fn zero_weights_reduce_to_adversarial_term() {
        let mut cfg = tiny();
        cfg.lambda_cls = 0.0;
        cfg.lambda_rec = 0.0;
        let state = GanState::<f64>::new(cfg).unwrap();
        let batch = state.batch_for_step(&tiny_set(4, 8), 0);
        let obj = state.objective(&batch);
        assert_eq!(obj.g.total, obj.g.adv);
        assert_eq!(obj.d.total, obj.d.real + obj.d.fake);
    }
}
