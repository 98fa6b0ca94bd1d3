mod common;

use std::time::Instant;

use common::{central_diff, relative_error};
use crlprune::data::{Dataset, SyntheticSpec};
use crlprune::nn::{Adam, Architecture, ConvShape, Mask, Network};
use crlprune::rng::rng_for;
use crlprune::Tensor;
use rand::Rng;

fn two_layer_arch(stride: usize, padding: usize) -> Architecture {
    Architecture {
        input_channels: 2,
        input_height: 5,
        input_width: 5,
        conv: vec![ConvShape {
            filters: 3,
            kernel_size: 3,
            stride,
            padding,
        }],
        head_hidden: vec![],
        classes: 3,
    }
}

fn flat_params(net: &Network) -> Vec<f64> {
    net.params().iter().flat_map(|p| p.data().to_vec()).collect()
}

fn set_flat(net: &mut Network, flat: &[f64]) {
    let mut off = 0;
    for p in net.params_mut() {
        let n = p.len();
        p.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
}

fn grad_check(arch: &Architecture, seed: u64, masks: Option<Vec<Mask>>) -> f64 {
    let mut rng = rng_for(seed, 0);
    let mut net = Network::new(arch, &mut rng).unwrap();
    if let Some(m) = masks {
        net.apply_mask(&m).unwrap();
    }
    let n = 4;
    let x = Tensor::from_fn(&[n, arch.input_channels, arch.input_height, arch.input_width], |_| rng.gen_range(-1.0..1.0));
    let y: Vec<usize> = (0..n).map(|i| i % arch.classes).collect();
    let (_, grads) = net.loss_and_grad(&x, &y).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let theta = flat_params(&net);
    let mut probe = net.clone();
    let numeric = central_diff(&theta, 1e-4, |p| {
        set_flat(&mut probe, p);
        probe.loss(&x, &y).unwrap()
    });
    relative_error(&analytic, &numeric)
}

#[test]
fn conv_and_dense_gradients_match_finite_differences() {
    for seed in 0..10 {
        for &(s, p) in &[(1, 1), (2, 0), (1, 0)] {
            let err = grad_check(&two_layer_arch(s, p), seed, None);
            assert!(err < 1e-4, "seed {seed} stride {s} pad {p}: relative error {err}");
        }
    }
}

#[test]
fn deep_net_gradients_match_finite_differences_with_masks() {
    let arch = Architecture {
        input_channels: 2,
        input_height: 6,
        input_width: 6,
        conv: vec![
            ConvShape { filters: 3, kernel_size: 3, stride: 1, padding: 1 },
            ConvShape { filters: 4, kernel_size: 3, stride: 2, padding: 1 },
        ],
        head_hidden: vec![5],
        classes: 2,
    };
    for seed in 0..5 {
        let masks = vec![Mask::from_bools(vec![true, false, true]), Mask::from_bools(vec![false, true, true, true])];
        let err = grad_check(&arch, seed, Some(masks));
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn linearly_separable_toy_set_converges() {
    let arch = Architecture {
        input_channels: 1,
        input_height: 4,
        input_width: 4,
        conv: vec![ConvShape { filters: 4, kernel_size: 3, stride: 1, padding: 1 }],
        head_hidden: vec![],
        classes: 2,
    };
    let mut rng = rng_for(11, 0);
    let mut net = Network::new(&arch, &mut rng).unwrap();
    // class 1 images are bright, class 0 images dark
    let n = 32;
    let x = Tensor::from_fn(&[n, 1, 4, 4], |i| {
        let sample = i / 16;
        let base = if sample % 2 == 1 { 1.0 } else { -1.0 };
        base + 0.1 * ((i * 31 % 17) as f64 / 17.0 - 0.5)
    });
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut opt = Adam::new(net.params());
    let mut loss = f64::INFINITY;
    for _ in 0..200 {
        loss = net.train_step(&x, &y, &mut opt, 1e-2).unwrap();
    }
    assert!(loss < 0.1, "final loss {loss}");
    let data = Dataset::new(x, y, 2).unwrap();
    assert_eq!(net.evaluate(&data).unwrap(), 1.0);
}

#[test]
fn training_is_bit_reproducible() {
    let run = || {
        let spec = SyntheticSpec::default();
        let (train, _) = spec.generate(3).unwrap();
        let mut rng = rng_for(3, 1);
        let mut net = Network::new(&Architecture::default(), &mut rng).unwrap();
        let mut opt = Adam::new(net.params());
        (0..5)
            .map(|_| {
                let (x, y) = train.sample_batch(60, &mut rng);
                net.train_step(&x, &y, &mut opt, 1e-3).unwrap()
            })
            .collect::<Vec<f64>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_loss_aborts() {
    let mut rng = rng_for(1, 0);
    let mut net = Network::new(&two_layer_arch(1, 1), &mut rng).unwrap();
    let mut opt = Adam::new(net.params());
    let x = Tensor::filled(&[1, 2, 5, 5], f64::NAN);
    assert!(net.train_step(&x, &[0], &mut opt, 1e-3).is_err());
    assert!(net.train_step(&Tensor::zeros(&[1, 2, 5, 5]), &[0], &mut opt, 0.0).is_err());
    assert!(net.train_step(&Tensor::zeros(&[1, 2, 5, 5]), &[7], &mut opt, 1e-3).is_err());
}

#[test]
#[ignore]
fn timing_probe() {
    let (train, _) = SyntheticSpec::default().generate(3).unwrap();
    let mut rng = rng_for(3, 1);
    let mut net = Network::new(&Architecture::default(), &mut rng).unwrap();
    let mut opt = Adam::new(net.params());
    let t = Instant::now();
    for _ in 0..50 {
        let (x, y) = train.sample_batch(60, &mut rng);
        net.train_step(&x, &y, &mut opt, 1e-3).unwrap();
    }
    eprintln!("train step: {:?}", t.elapsed() / 50);
}
