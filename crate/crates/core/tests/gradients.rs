//! Central finite-difference checks for every layer, the network as a whole,
//! and the reciprocal-point losses.

use osrk_core::network::{build_network, LayerSpec, NetworkConfig};
use osrk_core::rpl::{loss_boundary, loss_classification, loss_total, RplHead};
use osrk_core::tensor::{
    conv2d, conv2d_backward, dense, dense_backward, grad_check, grad_check_subset, maxpool2d, maxpool2d_backward, relu,
    relu_backward, Conv2d, Dense, Tensor,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values at least 0.01 apart, so a step of 1e-4 never reorders them.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).unwrap()
}

/// Scalar probe `sum(y * r)` whose output gradient is `r`.
fn probe(y: &Tensor, r: &Tensor) -> f64 {
    y.values().iter().zip(r.values()).map(|(a, b)| a * b).sum()
}

#[test]
fn conv_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (stride, pad) = [(1, 0), (1, 1), (2, 1), (2, 2)][seed as usize % 4];
        let x = random(&[2, 2, 7, 7], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let out_shape = conv2d(&x, &Conv2d::new(w.clone(), b.clone(), stride, pad).unwrap()).unwrap().shape().to_vec();
        let r = random(&out_shape, &mut rng);
        let report = grad_check(
            |p| {
                let mut c = Conv2d::new(p[0].clone(), p[1].clone(), stride, pad)?;
                let y = conv2d(&p[2], &c)?;
                let dx = conv2d_backward(&p[2], &mut c, &r, true, true)?.unwrap();
                Ok((probe(&y, &r), vec![c.weight.grad().unwrap().to_vec(), c.bias.grad().unwrap().to_vec(), dx.values().to_vec()]))
            },
            &[w, b, x],
            STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

#[test]
fn dense_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random(&[3, 5], &mut rng);
        let w = random(&[4, 5], &mut rng);
        let b = random(&[4], &mut rng);
        let r = random(&[3, 4], &mut rng);
        let report = grad_check(
            |p| {
                let mut d = Dense::new(p[0].clone(), p[1].clone())?;
                let y = dense(&p[2], &d)?;
                let dx = dense_backward(&p[2], &mut d, &r, true)?;
                Ok((probe(&y, &r), vec![d.weight.grad().unwrap().to_vec(), d.bias.grad().unwrap().to_vec(), dx.values().to_vec()]))
            },
            &[w, b, x],
            STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

#[test]
fn pool_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (window, stride) = [(2, 2), (3, 2), (2, 1)][seed as usize % 3];
        let x = distinct(&[2, 2, 6, 6], &mut rng);
        let out_shape = maxpool2d(&x, window, stride).unwrap().0.shape().to_vec();
        let r = random(&out_shape, &mut rng);
        let report = grad_check(
            |p| {
                let (y, idx) = maxpool2d(&p[0], window, stride)?;
                let dx = maxpool2d_backward(&idx, &r)?;
                Ok((probe(&y, &r), vec![dx.values().to_vec()]))
            },
            &[x],
            STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = distinct(&[3, 7], &mut rng);
        // keep every input away from the kink
        let x = Tensor::from_fn(x.shape(), |i| {
            let v = x.values()[i];
            if v.abs() < 0.005 { 0.5 } else { v }
        });
        let r = random(&[3, 7], &mut rng);
        let report = grad_check(
            |p| {
                let y = relu(&p[0]);
                let dx = relu_backward(&p[0], &r)?;
                Ok((probe(&y, &r), vec![dx.values().to_vec()]))
            },
            &[x],
            STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

fn small_net() -> NetworkConfig {
    NetworkConfig {
        input_size: 8,
        layers: vec![
            LayerSpec::Conv { kernel: 3, channels: 3, stride: 1, padding: 1 },
            LayerSpec::Pool { window: 2, stride: 2 },
            LayerSpec::Conv { kernel: 3, channels: 2, stride: 1, padding: 1 },
            LayerSpec::Dense { out: 6 },
            LayerSpec::Dense { out: 3 },
        ],
        embedding_dim: 3,
        first_layer_init: Default::default(),
        freeze_first_layer: false,
    }
}

/// Whole network plus total loss, differentiated with respect to every parameter.
#[test]
fn network_and_loss_gradients() {
    let cfg = small_net();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let net = build_network(&cfg, seed).unwrap();
        let head = RplHead::from_parts(3, 3, random(&[9], &mut rng).into_values(), vec![0.3], 1.0, 0.1).unwrap();
        let x = distinct(&[2, 1, 8, 8], &mut rng);
        let labels = [0usize, 2];
        let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
        let params: Vec<Tensor> = net.named_params().into_iter().map(|(_, t)| t.clone()).collect();
        let report = grad_check_subset(
            |p| {
                let mut n = net.clone();
                for (name, t) in names.iter().zip(p) {
                    n.set_param(name, t.values())?;
                }
                n.zero_grad();
                let (emb, tape) = n.forward_train(&x)?;
                let loss = loss_total(emb.values(), &labels, &head)?;
                n.backward(&tape, &Tensor::new(emb.shape().to_vec(), loss.grad.d_features.clone())?)?;
                let grads = n.named_params().into_iter().map(|(_, t)| t.grad().unwrap().to_vec()).collect();
                Ok((loss.total(), grads))
            },
            &params,
            STEP,
            12,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

struct LossCase {
    features: Tensor,
    points: Tensor,
    radius: Tensor,
    labels: Vec<usize>,
}

/// Random batch whose Euclidean distances all stay clear of the hinge.
fn loss_case(seed: u64, per_class: bool) -> LossCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m, b) = (3, 4, 5);
    loop {
        let features = random(&[b, m], &mut rng);
        let points = random(&[n, m], &mut rng);
        let radius = Tensor::from_fn(&[if per_class { n } else { 1 }], |_| rng.random_range(0.1..0.6));
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
        let clear = labels.iter().enumerate().all(|(i, &y)| {
            let f = &features.values()[i * m..(i + 1) * m];
            let p = &points.values()[y * m..(y + 1) * m];
            let de = f.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m as f64;
            let r = radius.values()[if per_class { y } else { 0 }];
            (de - r).abs() > 0.01
        });
        if clear {
            return LossCase { features, points, radius, labels };
        }
    }
}

type LossFn = fn(&[f64], &[usize], &RplHead) -> osrk_core::Result<osrk_core::rpl::LossGrad>;

fn check_loss(name: &str, f: LossFn, gamma: f64, lambda: f64) {
    for seed in 0..SEEDS {
        let case = loss_case(500 + seed, seed % 2 == 1);
        let labels = case.labels.clone();
        let report = grad_check(
            |p| {
                let head = RplHead::from_parts(3, 4, p[1].values().to_vec(), p[2].values().to_vec(), gamma, lambda)?;
                let g = f(p[0].values(), &labels, &head)?;
                Ok((g.value, vec![g.d_features, g.d_points, g.d_radius]))
            },
            &[case.features, case.points, case.radius],
            STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{name} seed {seed}: {report:?}");
    }
}

fn total_as_grad(f: &[f64], l: &[usize], h: &RplHead) -> osrk_core::Result<osrk_core::rpl::LossGrad> {
    loss_total(f, l, h).map(|t| t.grad)
}

#[test]
fn classification_loss_gradients() {
    check_loss("classification", loss_classification, 1.0, 0.1);
    check_loss("classification gamma 2.5", loss_classification, 2.5, 0.1);
}

#[test]
fn boundary_loss_gradients() {
    check_loss("boundary", loss_boundary, 1.0, 0.1);
}

#[test]
fn total_loss_gradients() {
    check_loss("total", total_as_grad, 1.0, 0.1);
    check_loss("total lambda 1", total_as_grad, 1.0, 1.0);
}

/// The radius gradient of the boundary loss is minus the fraction of samples
/// outside their radius.
#[test]
fn boundary_radius_gradient_is_active_fraction() {
    for seed in 0..SEEDS {
        let case = loss_case(700 + seed, false);
        let head =
            RplHead::from_parts(3, 4, case.points.values().to_vec(), case.radius.values().to_vec(), 1.0, 0.1).unwrap();
        let m = 4;
        let active = case
            .labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| {
                let f = &case.features.values()[i * m..(i + 1) * m];
                let de = f.iter().zip(head.point(y)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m as f64;
                de > head.radius_for(y)
            })
            .count();
        let g = loss_boundary(case.features.values(), &case.labels, &head).unwrap();
        let expected = -(active as f64) / case.labels.len() as f64;
        assert!((g.d_radius[0] - expected).abs() < 1e-15, "seed {seed}: {} vs {expected}", g.d_radius[0]);
    }
}
