use gridmon::ann::{init_model, Activation, AnnArchitecture, AnnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(activation: Activation, seed: u64) -> AnnModel {
    let arch = AnnArchitecture {
        n_hidden_layers: 2,
        hidden_width: Some(8),
        hidden_activation: activation,
        ..AnnArchitecture::new(4, 3)
    };
    init_model(&arch, seed).unwrap()
}

fn flatten(layers: &[gridmon::ann::Layer]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
}

/// Worst relative error `|g - g_fd| / max(|g|, |g_fd|)` (vector norms) over
/// 100 random single-sample points.
fn worst_relative_error(activation: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for point in 0..100 {
        let mut model = net(activation, point);
        let x = vec![(0..4).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>()];
        let y = vec![(0..3).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()];
        let (_, grad) = model.loss_and_gradient(&x, &y);
        let analytic = flatten(&grad);
        let theta = model.params();
        let h = 1e-6;
        let mut numeric = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] = theta[k] + h;
            model.set_params(&p);
            let up = model.loss_and_gradient(&x, &y).0;
            p[k] = theta[k] - h;
            model.set_params(&p);
            let down = model.loss_and_gradient(&x, &y).0;
            numeric[k] = (up - down) / (2.0 * h);
        }
        model.set_params(&theta);
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm_a: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst = worst.max(diff / norm_a.max(norm_n).max(1e-12));
    }
    worst
}

#[test]
fn tanh_gradients_match_finite_differences() {
    let e = worst_relative_error(Activation::Tanh);
    assert!(e < 1e-5, "relative error {e:.2e}");
}

#[test]
fn sigmoid_gradients_match_finite_differences() {
    let e = worst_relative_error(Activation::Sigmoid);
    assert!(e < 1e-5, "relative error {e:.2e}");
}

#[test]
fn relu_gradients_match_finite_differences() {
    let e = worst_relative_error(Activation::Relu);
    assert!(e < 1e-5, "relative error {e:.2e}");
}

#[test]
fn parameter_count_of_small_network() {
    let m = net(Activation::Tanh, 0);
    assert_eq!(m.params().len(), 4 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
    assert_eq!(m.arch.n_params().unwrap(), m.params().len());
}
