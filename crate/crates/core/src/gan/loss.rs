//! Loss terms and their gradients with respect to network outputs.

use super::real::Real;
use super::tensor::Tensor;
use super::NUM_DOMAINS;

/// Probabilities are clamped to this distance from 0 and 1 before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `E[log D(x)] + E[log(1 - D(G(y)))]`, expectations taken as means over
/// every batch element and patch position.
pub fn adversarial_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(clamp_prob(p))).sum::<f64>() / v.len() as f64;
    mean(d_real, &|p| p.ln()) + mean(d_fake, &|p| (1.0 - p).ln())
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus<F: Real>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid_f<F: Real>(z: F) -> F {
    F::c(sigmoid(z.as_f64()))
}

/// Mean of `-log sigmoid(z)` (target "real") or `-log(1 - sigmoid(z))`
/// (target "fake") over all logits, with its gradient.
pub fn bce_logits<F: Real>(z: &Tensor<F>, real: bool) -> (F, Tensor<F>) {
    let n = F::c(z.data.len() as f64);
    let mut loss = F::zero();
    let grad = z.map(|v| {
        let s = sigmoid_f(v);
        if real {
            (s - F::one()) / n
        } else {
            s / n
        }
    });
    for &v in &z.data {
        loss = loss + if real { softplus(-v) } else { softplus(v) };
    }
    (loss / n, grad)
}

/// Mean softmax cross-entropy of `n x 7` logits against one code per sample.
pub fn cross_entropy<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> (F, Tensor<F>) {
    assert_eq!(logits.n, labels.len());
    assert_eq!(logits.sample_len(), NUM_DOMAINS);
    let n = F::c(labels.len() as f64);
    let mut loss = F::zero();
    let mut grad = logits.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.sample_mut(i);
        let max = row.iter().fold(F::neg_infinity(), |a, &v| a.max(v));
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
        loss = loss - row[y].max(F::c(1e-30)).ln();
        row[y] = row[y] - F::one();
        row.iter_mut().for_each(|v| *v = *v / n);
    }
    (loss / n, grad)
}

/// Mean absolute difference and its gradient with respect to `a`.
pub fn l1<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> (F, Tensor<F>) {
    assert_eq!(a.shape(), b.shape());
    let n = F::c(a.data.len() as f64);
    let mut loss = F::zero();
    let mut grad = a.clone();
    for (g, (&x, &y)) in grad.data.iter_mut().zip(a.data.iter().zip(&b.data)) {
        let d = x - y;
        loss = loss + d.abs();
        *g = if d > F::zero() {
            F::one() / n
        } else if d < F::zero() {
            -F::one() / n
        } else {
            F::zero()
        };
    }
    (loss / n, grad)
}

/// Row-wise argmax of `n x 7` logits; ties go to the lower code.
pub fn argmax_rows<F: Real>(logits: &Tensor<F>) -> Vec<usize> {
    (0..logits.n)
        .map(|i| {
            let row = logits.sample(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversarial_loss_reference_values() {
        let eps = 1e-9;
        assert!(adversarial_loss(&[1.0 - eps], &[eps]).abs() < 1e-6);
        assert!((adversarial_loss(&[0.5], &[0.5]) + 2.0 * 2f64.ln()).abs() < 1e-12);
        let v = adversarial_loss(&[0.9, 0.8], &[0.3, 0.1]);
        let expect = (0.9f64.ln() + 0.8f64.ln()) / 2.0 + (0.7f64.ln() + 0.9f64.ln()) / 2.0;
        assert!((v - expect).abs() < 1e-12);
        assert!((v + 0.395276).abs() < 1e-5);
    }

    #[test]
    fn bce_matches_log_sigmoid() {
        let z = Tensor::from_vec(1, 1, 1, 3, vec![-2.0f64, 0.0, 3.0]);
        let (real, _) = bce_logits(&z, true);
        let (fake, _) = bce_logits(&z, false);
        let expect_real = -z.data.iter().map(|&v| sigmoid(v).ln()).sum::<f64>() / 3.0;
        let expect_fake = -z.data.iter().map(|&v| (1.0 - sigmoid(v)).ln()).sum::<f64>() / 3.0;
        assert!((real - expect_real).abs() < 1e-12);
        assert!((fake - expect_fake).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let z = Tensor::from_vec(2, 7, 1, 1, vec![0.0f64; 14]);
        let (loss, grad) = cross_entropy(&z, &[0, 6]);
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        assert!((grad.data[0] - (1.0 / 7.0 - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn l1_of_identical_tensors_is_zero() {
        let a = Tensor::from_vec(1, 3, 2, 2, (0..12).map(|v| v as f32 * 0.1).collect());
        assert_eq!(l1(&a, &a).0, 0.0);
    }
}
