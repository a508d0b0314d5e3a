//! Mean-reduced losses returning `(value, d value / d input)`.

use crate::tensor::{Scalar, Tensor};

/// Mean absolute error. The subgradient at zero residual is 0.
pub fn l1<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> (f64, Tensor<F>) {
    assert_eq!(pred.shape(), target.shape(), "l1 shapes differ");
    let n = pred.len() as f64;
    let inv = F::of(1.0 / n);
    let mut sum = 0.0;
    let grad: Vec<F> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.to_f64().unwrap().abs();
            if d > F::zero() {
                inv
            } else if d < F::zero() {
                -inv
            } else {
                F::zero()
            }
        })
        .collect();
    (sum / n, Tensor::from_vec(pred.shape(), grad))
}

fn bce_term(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy on logits against a constant label.
pub fn bce_with_logits<F: Scalar>(logits: &Tensor<F>, label: f64) -> (f64, Tensor<F>) {
    let n = logits.len() as f64;
    let mut sum = 0.0;
    let grad: Vec<F> = logits
        .data()
        .iter()
        .map(|&z| {
            let z = z.to_f64().unwrap();
            sum += bce_term(z, label);
            F::of((crate::autograd::sigmoid(z) - label) / n)
        })
        .collect();
    (sum / n, Tensor::from_vec(logits.shape(), grad))
}

/// Binary cross-entropy on logits against per-element labels in [0, 1].
pub fn bce_with_logits_map<F: Scalar>(logits: &Tensor<F>, labels: &Tensor<F>) -> (f64, Tensor<F>) {
    assert_eq!(logits.shape(), labels.shape(), "bce shapes differ");
    let n = logits.len() as f64;
    let mut sum = 0.0;
    let grad: Vec<F> = logits
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&z, &t)| {
            let (z, t) = (z.to_f64().unwrap(), t.to_f64().unwrap());
            sum += bce_term(z, t);
            F::of((crate::autograd::sigmoid(z) - t) / n)
        })
        .collect();
    (sum / n, Tensor::from_vec(logits.shape(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([1, 1, 1, v.len()], v.to_vec())
    }

    fn check_grad(f: impl Fn(&Tensor<f64>) -> f64, grad: &Tensor<f64>, x: &Tensor<f64>) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut a = x.clone();
            a.data_mut()[i] += h;
            let mut b = x.clone();
            b.data_mut()[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - grad.data()[i]).abs() < 1e-6, "{i}: {fd} vs {}", grad.data()[i]);
        }
    }

    #[test]
    fn l1_value_and_grad() {
        let (v, g) = l1(&t(&[0.0, 1.0, 0.5]), &t(&[1.0, 1.0, 0.0]));
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(g.data(), &[-1.0 / 3.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn bce_matches_naive_formula_and_fd() {
        let z = t(&[-3.0, -0.2, 0.0, 0.7, 4.0]);
        for label in [0.0, 1.0] {
            let (v, g) = bce_with_logits(&z, label);
            let naive: f64 = z
                .data()
                .iter()
                .map(|&z| {
                    let p = 1.0 / (1.0 + (-z).exp());
                    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / 5.0;
            assert!((v - naive).abs() < 1e-12);
            check_grad(|x| bce_with_logits(x, label).0, &g, &z);
        }
        let labels = t(&[0.0, 1.0, 1.0, 0.0, 1.0]);
        let (_, g) = bce_with_logits_map(&z, &labels);
        check_grad(|x| bce_with_logits_map(x, &labels).0, &g, &z);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let (v, g) = bce_with_logits(&t(&[1000.0, -1000.0]), 1.0);
        assert!((v - 500.0).abs() < 1e-9);
        assert!(g.data().iter().all(|x| x.is_finite()));
    }
}
