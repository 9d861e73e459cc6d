#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regid_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.gen())
}

/// Random `d × k` matrix with orthonormal columns (Gram-Schmidt on Gaussian columns).
pub fn orthonormal(d: usize, k: usize, seed: u64) -> Matrix {
    let g = gaussian(k, d, seed);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for row in g.iter_rows() {
        let mut v = row.to_vec();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        cols.push(v);
    }
    Matrix::from_fn(d, k, |i, j| cols[j][i])
}

/// Embeds the rows of `x` (M × k) into ℝ^d through `x · Qᵀ` with `Q` orthonormal d × k.
pub fn embed(x: &Matrix, d: usize, seed: u64) -> Matrix {
    let q = orthonormal(d, x.cols(), seed);
    x.matmul(&q.transpose()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Every parameter slice of a model, in a fixed order.
pub fn param_slices(m: &mut regid_core::mlp::MlpModel) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for layer in m.hidden.iter_mut().chain(std::iter::once(&mut m.head)) {
        out.push(layer.weights.as_mut_slice());
        out.push(&mut layer.bias[..]);
    }
    out
}

/// Largest relative discrepancy between analytic and central-difference gradients.
pub fn max_fd_error(
    model: &regid_core::mlp::MlpModel,
    x: &Matrix,
    y: &Matrix,
    weight_decay: f64,
    step: f64,
) -> f64 {
    use regid_core::mlp::{backward, loss};
    let mut grads = backward(model, x, y, weight_decay).unwrap();
    let analytic: Vec<f64> = param_slices(&mut grads)
        .into_iter()
        .flat_map(|s| s.to_vec())
        .collect();
    let mut probe = model.clone();
    let sizes: Vec<usize> = param_slices(&mut probe).iter().map(|s| s.len()).collect();
    let mut worst = 0.0f64;
    let mut k = 0;
    for (slice, len) in sizes.iter().enumerate() {
        for i in 0..*len {
            let original = param_slices(&mut probe)[slice][i];
            param_slices(&mut probe)[slice][i] = original + step;
            let up = loss(&probe, x, y, weight_decay).unwrap();
            param_slices(&mut probe)[slice][i] = original - step;
            let down = loss(&probe, x, y, weight_decay).unwrap();
            param_slices(&mut probe)[slice][i] = original;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[k];
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-7 {
                worst = worst.max((a - numeric).abs() / scale);
            }
            k += 1;
        }
    }
    worst
}

/// Random model and batch for gradient checks: `(D, L, width, n)` drawn from small ranges.
pub fn random_gradient_case(seed: u64) -> (regid_core::mlp::MlpModel, Matrix, Matrix, f64) {
    use regid_core::mlp::{init_model, MlpConfig};
    let mut r = rng(seed);
    let config = MlpConfig {
        input_dim: r.gen_range(1..5),
        hidden_layers: r.gen_range(1..4),
        hidden_width: r.gen_range(2..7),
        target_dim: r.gen_range(1..4),
        seed,
    };
    let mut model = init_model(&config).unwrap();
    for s in param_slices(&mut model) {
        for v in s.iter_mut() {
            *v += 0.1 * r.sample::<f64, _>(StandardNormal);
        }
    }
    let rows = r.gen_range(4..10);
    let x = gaussian(rows, config.input_dim, seed ^ 1);
    let y = gaussian(rows, config.target_dim, seed ^ 2);
    let weight_decay = if seed.is_multiple_of(2) { 0.0 } else { 0.05 };
    (model, x, y, weight_decay)
}
