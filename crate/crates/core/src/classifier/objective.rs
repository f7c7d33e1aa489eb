use crate::{Error, Result};

/// Multinomial logistic-regression parameters: a `C × D` weight matrix
/// (row-major) and `C` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub n_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Params {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * dim],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    /// Weights then biases, as one flat vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn from_flat(n_classes: usize, dim: usize, flat: &[f64]) -> Self {
        let split = n_classes * dim;
        Self {
            n_classes,
            dim,
            weights: flat[..split].to_vec(),
            bias: flat[split..].to_vec(),
        }
    }

    pub(crate) fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, s) in out.iter_mut().enumerate() {
            *s = self.bias[c] + self.row(c).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Training data borrowed as a row-major `n × dim` matrix plus class indices.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub x: &'a [f64],
    pub dim: usize,
    pub y: &'a [usize],
}

impl<'a> Design<'a> {
    pub fn new(x: &'a [f64], dim: usize, y: &'a [usize]) -> Result<Self> {
        if dim == 0 || x.len() != dim * y.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * y.len(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { x, dim, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

/// `log Σ exp(s)`, shifted by the max for stability.
pub(crate) fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy plus `(l2 / 2)·‖W‖²` (biases unpenalized), and its
/// exact gradient.
pub fn loss_and_gradient(params: &Params, data: &Design<'_>, l2: f64) -> Result<(f64, Params)> {
    if params.dim != data.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            actual: data.dim,
        });
    }
    if !l2.is_finite() || l2 < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "l2 strength must be finite and >= 0, got {l2}"
        )));
    }
    let c = params.n_classes;
    if let Some(&bad) = data.y.iter().find(|&&k| k >= c) {
        return Err(Error::InvalidConfig(format!(
            "label index {bad} out of range for {c} classes"
        )));
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::NoDocuments);
    }
    let mut grad = Params::zeros(c, params.dim);
    let mut scores = vec![0.0; c];
    let mut loss = 0.0;
    for i in 0..n {
        let x = data.row(i);
        let target = data.y[i];
        params.scores_into(x, &mut scores);
        let lse = log_sum_exp(&scores);
        loss += lse - scores[target];
        for (k, &s) in scores.iter().enumerate() {
            let residual = (s - lse).exp() - if k == target { 1.0 } else { 0.0 };
            grad.bias[k] += residual;
            let row = &mut grad.weights[k * params.dim..(k + 1) * params.dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += residual * v;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    grad.bias.iter_mut().for_each(|g| *g *= inv_n);
    let mut penalty = 0.0;
    for (g, w) in grad.weights.iter_mut().zip(&params.weights) {
        *g = *g * inv_n + l2 * w;
        penalty += w * w;
    }
    loss += 0.5 * l2 * penalty;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_balanced_two_class_loss_is_ln2() {
        let x = [1.0, -2.0, 0.5, 3.0, -1.0, 0.0, 2.0, 2.0];
        let y = [0, 1, 0, 1];
        let data = Design::new(&x, 2, &y).unwrap();
        let (loss, grad) = loss_and_gradient(&Params::zeros(2, 2), &data, 1.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(grad.bias.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let x = [1.0];
        let y = [1];
        let data = Design::new(&x, 1, &y).unwrap();
        let mut params = Params::zeros(2, 1);
        params.weights = vec![-50.0, 50.0];
        let (loss, _) = loss_and_gradient(&params, &data, 0.0).unwrap();
        assert!(loss < 1e-40, "{loss}");
    }

    /// Central differences at step 1e-4 against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d, c) = (25, 4, 3);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let data = Design::new(&x, d, &y).unwrap();
        let flat: Vec<f64> = (0..c * d + c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = Params::from_flat(c, d, &flat);
        let (_, grad) = loss_and_gradient(&params, &data, 0.3).unwrap();
        let analytic = grad.to_flat();
        let h = 1e-4;
        for j in 0..flat.len() {
            let mut plus = flat.clone();
            plus[j] += h;
            let mut minus = flat.clone();
            minus[j] -= h;
            let fp = loss_and_gradient(&Params::from_flat(c, d, &plus), &data, 0.3)
                .unwrap()
                .0;
            let fm = loss_and_gradient(&Params::from_flat(c, d, &minus), &data, 0.3)
                .unwrap()
                .0;
            let numeric = (fp - fm) / (2.0 * h);
            assert!(
                (numeric - analytic[j]).abs() < 1e-5,
                "param {j}: {numeric} vs {}",
                analytic[j]
            );
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Design::new(&[1.0, 2.0, 3.0], 2, &[0, 1]).is_err());
        assert!(matches!(
            Design::new(&[1.0, f64::NAN], 1, &[0, 1]),
            Err(Error::NonFinite(_))
        ));
        let data = Design::new(&[1.0, 2.0], 2, &[0]).unwrap();
        assert!(loss_and_gradient(&Params::zeros(2, 3), &data, 0.0).is_err());
        assert!(loss_and_gradient(&Params::zeros(2, 2), &data, -1.0).is_err());
    }
}
