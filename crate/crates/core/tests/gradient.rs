use lobbench_core::predictor::{init_mlp, Activation, MlpConfig};
use lobbench_core::Mlp64;
use proptest::prelude::*;

const STEP: f64 = 1e-6;
// central-difference roundoff is about 1e-10 here; smaller gradients compare absolutely
const GRAD_FLOOR: f64 = 1e-5;

fn worst_relative_error(net: &mut Mlp64, x: &[f64], y: &[usize]) -> f64 {
    let n = y.len();
    let analytic = net.loss_and_grad(x, y, n).unwrap().grad;
    let mut worst: f64 = 0.0;
    for j in 0..net.params.len() {
        let orig = net.params[j];
        net.params[j] = orig + STEP;
        let up = net.loss_and_grad(x, y, n).unwrap().loss;
        net.params[j] = orig - STEP;
        let down = net.loss_and_grad(x, y, n).unwrap().loss;
        net.params[j] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[j].abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    worst
}

/// Smallest |pre-activation| over the hidden units, from an independent
/// forward pass over the documented layout (per layer: output-major weights,
/// then biases).
fn closest_to_kink(net: &Mlp64, x: &[f64], n: usize, slope: f64) -> f64 {
    let mut widths = vec![net.config.input_dim];
    widths.extend(&net.config.hidden);
    let mut closest = f64::INFINITY;
    for s in 0..n {
        let mut a: Vec<f64> = x[s * widths[0]..(s + 1) * widths[0]].to_vec();
        let mut off = 0;
        for w in widths.windows(2) {
            let (inp, out) = (w[0], w[1]);
            let bias = off + inp * out;
            let z: Vec<f64> = (0..out)
                .map(|o| {
                    net.params[bias + o]
                        + (0..inp)
                            .map(|i| net.params[off + o * inp + i] * a[i])
                            .sum::<f64>()
                })
                .collect();
            closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
            a = z
                .iter()
                .map(|v| if *v > 0.0 { *v } else { slope * v })
                .collect();
            off = bias + out;
        }
    }
    closest
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_gradient_matches_central_differences(
        seed in 0u64..1_000,
        input_dim in 2usize..8,
        hidden in prop::collection::vec(2usize..7, 1..3),
        leaky in any::<bool>(),
        rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 8), 0usize..3), 1..5),
    ) {
        let config = MlpConfig {
            input_dim,
            hidden,
            activation: if leaky { Activation::LeakyRelu { slope: 0.01 } } else { Activation::Relu },
            output_dim: 3,
        };
        let mut net: Mlp64 = init_mlp(&config, seed).unwrap();
        // non-zero biases so hidden units are not all on the same side of the kink
        for (i, p) in net.params.iter_mut().enumerate() {
            *p += 0.05 * ((i as f64 * 0.37).sin());
        }
        let x: Vec<f64> = rows.iter().flat_map(|(r, _)| r[..input_dim].to_vec()).collect();
        let y: Vec<usize> = rows.iter().map(|(_, c)| *c).collect();
        // central differences are meaningless across a kink
        let slope = if leaky { 0.01 } else { 0.0 };
        prop_assume!(closest_to_kink(&net, &x, y.len(), slope) > 1e-3);
        prop_assert!(worst_relative_error(&mut net, &x, &y) <= 1e-4);
    }
}
