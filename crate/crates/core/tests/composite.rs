mod common;

use common::*;
use hardnet_core::{Activation, DenseNet, HardLayer, Objective};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Loss of `objective(layer(net(z)))`, where the net emits `(r, s)`.
fn composite_loss(net: &DenseNet, layer: &HardLayer, obj: &Objective, z: &[f64]) -> f64 {
    let out = net.predict(z).unwrap();
    let n = layer.dim();
    let (x, _) = layer.forward(&DVector::from_column_slice(&out[..n]), out[n]).unwrap();
    obj.value(&x).unwrap()
}

#[test]
fn net_through_layer_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 3;
        let set = any_set(&mut rng, trial as u8, n, 12);
        let layer = HardLayer::new(set).unwrap();
        let mut net = DenseNet::mlp(4, &[16, 16], n + 1, Activation::Tanh, trial);
        let obj = Objective::Linear { c: normal_vec(&mut rng, n) };
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let (out, cache) = net.forward(&z).unwrap();
        let (x, fc) = layer
            .forward(&DVector::from_column_slice(&out[..n]), out[n])
            .unwrap();
        let (_, gx) = obj.eval(&x).unwrap();
        let back = layer.backward(&fc, &gx);
        let mut upstream = back.r.as_slice().to_vec();
        upstream.push(back.s);
        let grads = net.backward(&cache, &upstream);
        let analytic: Vec<f64> = grads.param_slices().concat();

        let h = 1e-6;
        let total = analytic.len();
        for k in (0..total).step_by(total / 25) {
            let probe = |net: &mut DenseNet, delta: f64| {
                let mut seen = 0;
                for slice in net.param_slices_mut() {
                    if k < seen + slice.len() {
                        slice[k - seen] += delta;
                        return;
                    }
                    seen += slice.len();
                }
            };
            probe(&mut net, h);
            let up = composite_loss(&net, &layer, &obj, &z);
            probe(&mut net, -2.0 * h);
            let dn = composite_loss(&net, &layer, &obj, &z);
            probe(&mut net, h);
            let fd = (up - dn) / (2.0 * h);
            worst = worst.max((fd - analytic[k]).abs() / (1.0 + fd.abs()));
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn trained_outputs_never_leave_the_set() {
    use hardnet_core::{AdamConfig, AdamState};
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let set = mixed_set(&mut rng, 2, 10);
    let layer = HardLayer::new(set.clone()).unwrap();
    let mut net = DenseNet::mlp(2, &[32], 3, Activation::Relu, 1);
    // Target far outside the set pulls every output to the boundary.
    let target = DVector::from_column_slice(&[50.0, -50.0]);
    let obj = Objective::LpDistance {
        p_norm: hardnet_core::PNorm::L2,
        target,
    };
    let mut adam = AdamState::new(AdamConfig::with_lr(1e-2));
    let inputs: Vec<[f64; 2]> = (0..16)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..200 {
        let mut total = hardnet_core::NetGradients::zeros_like(&net);
        let mut loss = 0.0;
        for z in &inputs {
            let (out, cache) = net.forward(z).unwrap();
            let (x, fc) = layer
                .forward(&DVector::from_column_slice(&out[..2]), out[2])
                .unwrap();
            assert!(set.is_feasible(&x, 1e-7).unwrap());
            let (l, g) = obj.eval(&x).unwrap();
            loss += l;
            let back = layer.backward(&fc, &g);
            total.accumulate(&net.backward(&cache, &[back.r[0], back.r[1], back.s]));
        }
        first.get_or_insert(loss);
        last = loss;
        let grads = total.param_slices();
        adam.step(&mut net.param_slices_mut(), &grads);
    }
    assert!(last < first.unwrap());
}
