//! Central-difference checks of every layer's backward pass in f64.

use plantnet_core::network::gradcheck::relative_error;
use plantnet_core::network::{
    batchnorm_backward, batchnorm_forward_train, cross_entropy, dense_backward, dense_forward,
    dropout_backward, dropout_forward, Mode,
};
use plantnet_core::tensor::{
    conv2d_backward, conv2d_forward, maxpool_backward, maxpool_forward, relu, relu_backward,
    softmax, softmax_backward,
};
use plantnet_core::{Padding, Rng, Tensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::from_f64(shape.to_vec(), &v).unwrap()
}

/// Loss `Σ out ⊙ r`, so `∂loss/∂out = r`.
fn weighted(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn fd(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + H;
            let up = f(&probe);
            probe.data_mut()[i] = orig - H;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn assert_close(what: &str, analytic: &Tensor<f64>, numeric: &[f64]) {
    let worst = analytic
        .data()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    assert!(worst <= TOL, "{what}: max relative error {worst:e}");
}

#[test]
fn conv2d_all_geometries() {
    let mut rng = Rng::new(1);
    for (h, w, k, stride, padding) in [
        (7, 6, 3, 1, Padding::Same),
        (7, 6, 3, 2, Padding::Same),
        (8, 7, 3, 2, Padding::Valid),
        (5, 5, 1, 1, Padding::Valid),
    ] {
        let x = random(&[2, h, w, 3], &mut rng);
        let kern = random(&[k, k, 3, 4], &mut rng);
        let bias = random(&[4], &mut rng);
        let y = conv2d_forward(&x, &kern, &bias, stride, padding).unwrap();
        let r = random(y.shape(), &mut rng);
        let (gx, gk, gb) = conv2d_backward(&x, &kern, &r, stride, padding).unwrap();
        let tag = format!("conv {h}x{w} k{k} s{stride} {padding}");
        assert_close(&format!("{tag} input"), &gx, &fd(&x, |x| {
            weighted(&conv2d_forward(x, &kern, &bias, stride, padding).unwrap(), &r)
        }));
        assert_close(&format!("{tag} kernel"), &gk, &fd(&kern, |k| {
            weighted(&conv2d_forward(&x, k, &bias, stride, padding).unwrap(), &r)
        }));
        assert_close(&format!("{tag} bias"), &gb, &fd(&bias, |b| {
            weighted(&conv2d_forward(&x, &kern, b, stride, padding).unwrap(), &r)
        }));
    }
}

#[test]
fn maxpool_all_geometries() {
    let mut rng = Rng::new(2);
    for (hw, stride, padding) in [(9, 3, Padding::Valid), (9, 2, Padding::Valid), (7, 2, Padding::Same)] {
        // distinct values spaced far wider than the probe step, so no argmax flips
        let n = 2 * hw * hw * 2;
        let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        rng.shuffle(&mut vals);
        let x = Tensor::from_f64(vec![2, hw, hw, 2], &vals).unwrap();
        let (y, map) = maxpool_forward(&x, 3, stride, padding).unwrap();
        let r = random(y.shape(), &mut rng);
        let gx = maxpool_backward(&map, &r).unwrap();
        assert_close(&format!("maxpool {hw} s{stride} {padding}"), &gx, &fd(&x, |x| {
            weighted(&maxpool_forward(x, 3, stride, padding).unwrap().0, &r)
        }));
    }
}

#[test]
fn relu_away_from_kink() {
    let mut rng = Rng::new(3);
    let mut x = random(&[4, 5], &mut rng);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    let r = random(&[4, 5], &mut rng);
    let gx = relu_backward(&x, &r).unwrap();
    assert_close("relu", &gx, &fd(&x, |x| weighted(&relu(x), &r)));
}

#[test]
fn batchnorm_conv_and_dense_layouts() {
    let mut rng = Rng::new(4);
    for shape in [vec![3, 4, 4, 5], vec![6, 7]] {
        let c = *shape.last().unwrap();
        let x = random(&shape, &mut rng);
        let gamma = random(&[c], &mut rng);
        let beta = random(&[c], &mut rng);
        let fwd = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
            let mut rm = Tensor::zeros(vec![c]).unwrap();
            let mut rv = Tensor::full(vec![c], 1.0).unwrap();
            batchnorm_forward_train(x, g, b, &mut rm, &mut rv, 1e-3, 0.99).unwrap()
        };
        let (y, cache) = fwd(&x, &gamma, &beta);
        let r = random(y.shape(), &mut rng);
        let (gx, gg, gb) = batchnorm_backward(&cache, &gamma, &r).unwrap();
        assert_close("bn input", &gx, &fd(&x, |x| weighted(&fwd(x, &gamma, &beta).0, &r)));
        assert_close("bn gamma", &gg, &fd(&gamma, |g| weighted(&fwd(&x, g, &beta).0, &r)));
        assert_close("bn beta", &gb, &fd(&beta, |b| weighted(&fwd(&x, &gamma, b).0, &r)));
    }
}

#[test]
fn dropout_with_fixed_mask() {
    let mut rng = Rng::new(5);
    let x = random(&[3, 8], &mut rng);
    let r = random(&[3, 8], &mut rng);
    let mask_rng = Rng::new(77);
    let (_, mask) = dropout_forward(&x, 0.4, &mut mask_rng.clone(), Mode::Train).unwrap();
    let gx = dropout_backward(mask.as_ref(), &r).unwrap();
    assert_close("dropout", &gx, &fd(&x, |x| {
        weighted(&dropout_forward(x, 0.4, &mut mask_rng.clone(), Mode::Train).unwrap().0, &r)
    }));
}

#[test]
fn dense_all_inputs() {
    let mut rng = Rng::new(6);
    let x = random(&[4, 6], &mut rng);
    let w = random(&[6, 3], &mut rng);
    let b = random(&[3], &mut rng);
    let r = random(&[4, 3], &mut rng);
    let (gx, gw, gb) = dense_backward(&x, &w, &r).unwrap();
    assert_close("dense input", &gx, &fd(&x, |x| weighted(&dense_forward(x, &w, &b).unwrap(), &r)));
    assert_close("dense weight", &gw, &fd(&w, |w| weighted(&dense_forward(&x, w, &b).unwrap(), &r)));
    assert_close("dense bias", &gb, &fd(&b, |b| weighted(&dense_forward(&x, &w, b).unwrap(), &r)));
}

#[test]
fn softmax_and_fused_cross_entropy() {
    let mut rng = Rng::new(7);
    let z = random(&[5, 4], &mut rng);
    let r = random(&[5, 4], &mut rng);
    let g = softmax_backward(&softmax(&z), &r).unwrap();
    assert_close("softmax", &g, &fd(&z, |z| weighted(&softmax(z), &r)));

    let mut y = vec![0.0; 20];
    for row in 0..5 {
        y[row * 4 + rng.below(4)] = 1.0;
    }
    let y = Tensor::from_f64(vec![5, 4], &y).unwrap();
    let fused = cross_entropy(&softmax(&z), &y).unwrap();
    assert_close("cross-entropy logits", &fused.logits_grad, &fd(&z, |z| {
        cross_entropy(&softmax(z), &y).unwrap().loss
    }));
}
