use osrk_core::data::LabeledSet;
use osrk_core::network::{build_network, LayerSpec, NetworkConfig};
use osrk_core::rpl::{BoundaryMode, RplHead};
use osrk_core::train::{fit, Trainer, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_net() -> NetworkConfig {
    NetworkConfig {
        input_size: 16,
        layers: vec![
            LayerSpec::Conv { kernel: 5, channels: 6, stride: 1, padding: 2 },
            LayerSpec::Pool { window: 2, stride: 2 },
            LayerSpec::Conv { kernel: 3, channels: 8, stride: 1, padding: 1 },
            LayerSpec::Pool { window: 2, stride: 2 },
            LayerSpec::Dense { out: 32 },
            LayerSpec::Dense { out: 8 },
        ],
        embedding_dim: 8,
        first_layer_init: Default::default(),
        freeze_first_layer: false,
    }
}

fn eight_samples() -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut set = LabeledSet::new(16);
    for i in 0..8 {
        let img: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        set.push(&img, i % 4).unwrap();
    }
    set
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, learning_rate: 0.01, batch_size: 8, lambda: 0.1, gamma: 1.0, momentum: 0.9, seed: 5, ..TrainConfig::default() }
}

fn run(epochs: usize) -> Vec<f64> {
    let net = build_network(&tiny_net(), 11).unwrap();
    let head = RplHead::new(4, 8, 1.0, 0.1, BoundaryMode::Shared, 12).unwrap();
    let (_, _, logs) = fit(net, head, &eight_samples(), &config(epochs)).unwrap();
    logs.iter().flat_map(|l| l.steps.iter().map(|s| s.total)).collect()
}

#[test]
fn overfits_eight_samples_within_500_steps() {
    let losses = run(500);
    assert_eq!(losses.len(), 500);
    let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let first_below = losses.iter().position(|l| *l < 0.1);
    assert!(first_below.is_some(), "initial {} best {best}", losses[0]);
}

#[test]
fn deterministic_runs_match_bit_for_bit() {
    let a = run(40);
    let b = run(40);
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = eight_samples();
    let mk = || {
        let net = build_network(&tiny_net(), 11).unwrap();
        let head = RplHead::new(4, 8, 1.0, 0.1, BoundaryMode::PerClass, 12).unwrap();
        Trainer::new(net, head, TrainConfig { batch_size: 3, ..config(6) }).unwrap()
    };
    let mut whole = mk();
    let all: Vec<f64> = whole.fit(&data).unwrap().iter().flat_map(|l| l.steps.iter().map(|s| s.total)).collect();

    let mut first = mk();
    let mut losses = Vec::new();
    for _ in 0..2 {
        losses.extend(first.run_epoch(&data).unwrap().steps.iter().map(|s| s.total));
    }
    let ckpt = first.checkpoint();
    drop(first);
    let mut resumed = Trainer::from_checkpoint(&ckpt).unwrap();
    losses.extend(resumed.fit(&data).unwrap().iter().flat_map(|l| l.steps.iter().map(|s| s.total)));
    assert_eq!(all.len(), losses.len());
    assert!(all.iter().zip(&losses).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(whole.checkpoint(), resumed.checkpoint());
}
