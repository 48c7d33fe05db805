mod common;

use common::*;
use cookstate::model::{ModelGraph, ModelSpec};
use cookstate::nn::gradcheck::finite_diff_check;
use cookstate::nn::{softmax_cross_entropy, BatchNorm, Dropout, Layer, Mode, Sequential, Tensor, Upsample};

#[test]
fn upsample_and_dropout_backprop() {
    let mut r = rng(21);
    for _ in 0..5 {
        let x = random_tensor(&[2, 2, 3, 3], &mut r);
        assert!(layer_gradient_error(&Layer::Upsample(Upsample::new(2).unwrap()), &x, &mut r) < 1e-6);
        assert!(layer_gradient_error(&Layer::Dropout(Dropout::new(0.5, 9).unwrap()), &x, &mut r) < 1e-6);
    }
}

#[test]
fn frozen_batchnorm_backprop_uses_running_statistics() {
    let mut r = rng(22);
    let mut bn = BatchNorm::new(2);
    bn.running_mean.data = vec![0.3, -0.2];
    bn.running_var.data = vec![1.7, 0.4];
    bn.gamma.data = vec![1.3, -0.6];
    let x = random_tensor(&[3, 2, 2, 2], &mut r);
    let w: Vec<f64> = (0..x.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let f = |xs: &[f64]| {
        let mut l = Layer::BatchNorm(bn.clone());
        let y = l.forward(&Tensor::new(x.shape(), xs.to_vec()).unwrap(), Mode::Train, true).unwrap();
        y.data.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut l = Layer::BatchNorm(bn.clone());
    l.forward(&x, Mode::Train, true).unwrap();
    let dx = l.backward(&Tensor::new(x.shape(), w.clone()).unwrap(), false).unwrap();
    assert!(finite_diff_check(f, &x.data, &dx.data, FD_STEP) < 1e-6);
    if let Layer::BatchNorm(after) = &l {
        assert_eq!(after.running_mean.data, bn.running_mean.data);
    }
}

#[test]
fn whole_model_parameter_gradients() {
    let mut r = rng(23);
    let spec = ModelSpec { input_side: 8, ..ModelSpec::default() };
    let model = ModelGraph::build(&spec, 5).unwrap();
    let x = random_tensor(&[3, 3, 8, 8], &mut r);
    let labels = [1, 7, 10];
    let loss = |net: &Sequential| {
        let mut n = net.clone();
        let logits = n.forward(&x, Mode::Train).unwrap();
        softmax_cross_entropy(&logits, &labels).unwrap().0
    };
    let mut m = model.clone();
    m.net.zero_grad();
    let logits = m.forward(&x, Mode::Train).unwrap();
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    m.backward(&g).unwrap();
    for i in [0, 3, m.dense_index()] {
        let grads: Vec<Vec<f64>> = m.net.layers[i].layer.params().iter().map(|p| p.grad.clone().unwrap()).collect();
        for (k, grad) in grads.iter().enumerate() {
            let values = model.net.layers[i].layer.params()[k].data.clone();
            // Spot-check a slice of each tensor to keep the run short.
            let take = values.len().min(24);
            let err = finite_diff_check(
                |vs| {
                    let mut net = model.net.clone();
                    net.layers[i].layer.params_mut()[k].data[..take].copy_from_slice(vs);
                    loss(&net)
                },
                &values[..take],
                &grad[..take],
                FD_STEP,
            );
            assert!(err < 1e-5, "layer {i} param {k}: {err}");
        }
    }
}
