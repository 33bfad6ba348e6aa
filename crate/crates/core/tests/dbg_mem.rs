mod common;
use common::*;
use yearest::model::{ArchSpec, Network};
use yearest::tensor::Tensor;
use yearest::loss::LossSpec;
use yearest::trainer::{train, LossPolicy, TrainConfig, TrainState};

#[test]
fn scan() {
    let mut rng = test_rng(55);
    let samples: Vec<(Tensor, f64)> = [3.0, 13.0, 33.0, 53.0, 73.0].iter().enumerate()
        .map(|(i, &t)| {
            let noise = random_tensor(&mut rng, vec![1, 16, 16], 0.05);
            let mut img = Tensor::filled(vec![1, 16, 16], 0.1 + 0.18 * i as f64);
            for (v, n) in img.data_mut().iter_mut().zip(noise.data()) { *v += n; }
            (img, t)
        }).collect();
    for (label, dropout) in [("drop0.5", 0.5), ("drop0.0", 0.0)] {
        for lr in [1e-2, 2e-2, 5e-2] {
            let mut net = Network::from_arch(&ArchSpec::Cnn { in_channels: 1, channels: vec![8, 16], hidden: [16, 8], dropout }).unwrap();
            net.init_parameters(6);
            let cfg = TrainConfig { epochs: 2000, batch_size: 5, learning_rate: lr, policy: LossPolicy::Fixed(LossSpec::mse()), seed: 7 };
            train(&mut net, &samples, &samples, &cfg, TrainState::fresh(&cfg), None).unwrap();
            let mae = samples.iter().map(|(x, t)| (net.predict(x).unwrap() - t).abs()).sum::<f64>() / 5.0;
            let preds: Vec<f64> = samples.iter().map(|(x, _)| net.predict(x).unwrap()).collect();
            println!("{label} lr={lr}: mae={mae:.3} preds={preds:?}");
        }
    }
}
