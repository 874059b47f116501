//! Backpropagation against a plain central difference written here, separate
//! from the library's gradient checker.

use acpa_eeg::nn::{cross_entropy, Mode, Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(model: &Model, x: &Tensor, labels: &[usize]) -> f64 {
    let (logits, _) = model.forward(x, Mode::Train).unwrap();
    cross_entropy(&logits, labels).unwrap().0
}

fn check(cfg: ModelConfig, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(cfg, seed).unwrap();
    let x = Tensor::randn(&[3, 8, 4, 6], 1.0, &mut rng);
    let labels = [0, 2, 3];
    let (logits, cache) = model.forward(&x, Mode::Train).unwrap();
    let (_, grad) = cross_entropy(&logits, &labels).unwrap();
    model.zero_grad();
    model.backward(cache, &grad).unwrap();
    let analytic = model.gradients();

    let h = 1e-5;
    let mut worst = 0.0f64;
    let n_tensors = analytic.len();
    for t in 0..n_tensors {
        let len = analytic[t].len();
        for _ in 0..3 {
            let i = rng.random_range(0..len);
            let orig = model.params_mut()[t].value.data()[i];
            model.params_mut()[t].value.data_mut()[i] = orig + h;
            let up = loss(&model, &x, &labels);
            model.params_mut()[t].value.data_mut()[i] = orig - h;
            let down = loss(&model, &x, &labels);
            model.params_mut()[t].value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[t].data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn reduced_model_gradients() {
    for seed in 0..3 {
        let worst = check(ModelConfig::reduced(), seed);
        assert!(worst < 1e-4, "seed {seed}: {worst:e}");
    }
}

#[test]
fn post_activation_without_attention() {
    let cfg = ModelConfig {
        cbam_enabled: false,
        preactivation: false,
        ..ModelConfig::reduced()
    };
    let worst = check(cfg, 9);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn canary_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Model::new(ModelConfig::reduced(), 1).unwrap();
    let x = Tensor::randn(&[2, 8, 4, 6], 1.0, &mut rng);
    let grads = |model: &mut Model| {
        let (logits, cache) = model.forward(&x, Mode::Train).unwrap();
        let (_, g) = cross_entropy(&logits, &[1, 3]).unwrap();
        model.zero_grad();
        model.backward(cache, &g).unwrap();
        model.gradients()
    };
    let clean = grads(&mut model);
    model.set_backward_fault(1.01);
    let faulty = grads(&mut model);
    assert_ne!(clean, faulty);
}
