use ppml_audit::nn::{finite_difference_gradient, LayerKind, ModelConfig, ModelParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        conv_channels: [4, 4, 8],
        kernel_size: 3,
        groupnorm_groups: 2,
        hidden_units: 8,
        num_classes: 3,
        input_shape: [16, 16, 3],
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Compare backprop against central differences on `per_kind` random
/// coordinates of every layer kind.
fn check_coordinates(config: &ModelConfig, seed: u64, per_kind: usize, h: f64) -> usize {
    let params = ModelParams::init(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let len: usize = config.input_shape.iter().product();
    let image: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let [hh, ww, cc] = config.input_shape;
    let batch = Tensor::new(vec![1, hh, ww, cc], image.clone()).unwrap();
    let label = 1;
    let (_, grads) = params.loss_and_per_example_gradients(&batch, &[label]).unwrap();
    let analytic = &grads[0];

    let specs = config.param_specs();
    let mut offsets = Vec::new();
    let mut start = 0;
    for spec in &specs {
        let n: usize = spec.shape.iter().product();
        offsets.push((spec.kind, start, n));
        start += n;
    }
    let mut checked = 0;
    for kind in [LayerKind::Conv, LayerKind::GroupNorm, LayerKind::Dense] {
        let pool: Vec<usize> = offsets
            .iter()
            .filter(|(k, _, _)| *k == kind)
            .flat_map(|&(_, s, n)| s..s + n)
            .collect();
        for _ in 0..per_kind {
            let idx = pool[rng.random_range(0..pool.len())];
            let fd = finite_difference_gradient(&params, &image, label, idx, h).unwrap();
            let bp = analytic.get(idx).unwrap();
            let err = relative_error(fd, bp);
            assert!(err < 1e-3, "{kind:?} coordinate {idx}: fd {fd} vs backprop {bp}");
            checked += 1;
        }
    }
    checked
}

#[test]
fn backprop_matches_finite_differences_on_every_layer_kind() {
    assert!(check_coordinates(&small_config(), 3, 40, 1e-5) >= 100);
}

#[test]
fn default_architecture_agrees_at_coarser_step() {
    let checked = check_coordinates(&ModelConfig::default().with_classes(4), 42, 4, 1e-4);
    assert_eq!(checked, 12);
}
