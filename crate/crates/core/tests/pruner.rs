use crlprune::nn::{Architecture, ConvShape, Mask, Network};
use crlprune::pruner::{
    flops_fraction, macs, mask_from_sparsity, pruned_count, remaining_param_fraction, CostFunction,
};
use crlprune::rng::rng_for;
use proptest::prelude::*;
use rand::Rng;

/// Exhaustive oracle: among all masks with `zeros` pruned filters, the one
/// removing the least total norm; ties go to the lexicographically smallest
/// pruned index set.
fn brute_force_mask(norms: &[f64], zeros: usize) -> Vec<u8> {
    let n = norms.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != zeros {
            continue;
        }
        let pruned: Vec<usize> = (0..n).filter(|i| bits & (1 << i) != 0).collect();
        let removed: f64 = pruned.iter().map(|&i| norms[i]).sum();
        let better = match &best {
            None => true,
            Some((b, set)) => removed < *b || (removed == *b && pruned < *set),
        };
        if better {
            best = Some((removed, pruned));
        }
    }
    let pruned = best.unwrap().1;
    (0..n).map(|i| u8::from(!pruned.contains(&i))).collect()
}

#[test]
fn magnitude_masks_match_exhaustive_search() {
    let mut rng = rng_for(42, 0);
    for case in 0..1000 {
        let n = rng.gen_range(1..=12);
        // half the cases draw from a coarse grid so ties are common; grid
        // values are exact binary fractions, keeping subset sums exact
        let norms: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| rng.gen_range(0..4) as f64 * 0.25).collect()
        } else {
            (0..n).map(|_| rng.gen_range(0.0..3.0)).collect()
        };
        let ratio = rng.gen_range(0.0..1.0);
        let mask = mask_from_sparsity(&norms, ratio).unwrap();
        let zeros = pruned_count(n, ratio);
        assert_eq!(mask.pruned(), zeros);
        assert_eq!(mask.to_bits(), brute_force_mask(&norms, zeros), "norms {norms:?} ratio {ratio}");
    }
}

fn toy_net(seed: u64, head_hidden: Vec<usize>) -> Network {
    let arch = Architecture {
        input_channels: 3,
        input_height: 6,
        input_width: 6,
        conv: vec![
            ConvShape { filters: 4, kernel_size: 3, stride: 1, padding: 1 },
            ConvShape { filters: 6, kernel_size: 3, stride: 2, padding: 0 },
        ],
        head_hidden,
        classes: 3,
    };
    Network::new(&arch, &mut rng_for(seed, 0)).unwrap()
}

/// Counts surviving parameters entry by entry: a conv weight survives when
/// its filter and its input channel both survive; a head weight survives when
/// the feature map it reads survives.
fn enumerate_surviving_params(net: &Network, masks: &[Mask]) -> usize {
    let mut alive = 0;
    for (t, layer) in net.conv_layers().iter().enumerate() {
        let s = layer.spec;
        for f in 0..s.num_filters {
            for c in 0..s.in_channels {
                let input_alive = t == 0 || masks[t - 1].keep(c);
                for _ in 0..s.kernel_size * s.kernel_size {
                    if masks[t].keep(f) && input_alive {
                        alive += 1;
                    }
                }
            }
            if masks[t].keep(f) {
                alive += 1;
            }
        }
    }
    let positions = net.conv_geometry().last().unwrap().out_positions();
    let last = masks.last().unwrap();
    for (i, d) in net.head().layers.iter().enumerate() {
        for _o in 0..d.outputs() {
            for j in 0..d.inputs() {
                if i > 0 || last.keep(j / positions) {
                    alive += 1;
                }
            }
            alive += 1;
        }
    }
    alive
}

/// Counts multiply-accumulates by walking every output position.
fn enumerate_macs(net: &Network, masks: &[Mask]) -> usize {
    let mut total = 0;
    for (t, (layer, g)) in net.conv_layers().iter().zip(net.conv_geometry()).enumerate() {
        for f in 0..layer.spec.num_filters {
            for _pos in 0..g.out_positions() {
                for c in 0..layer.spec.in_channels {
                    if masks[t].keep(f) && (t == 0 || masks[t - 1].keep(c)) {
                        total += g.kernel * g.kernel;
                    }
                }
            }
        }
    }
    let positions = net.conv_geometry().last().unwrap().out_positions();
    for (i, d) in net.head().layers.iter().enumerate() {
        for _ in 0..d.outputs() {
            total += (0..d.inputs()).filter(|&j| i > 0 || masks.last().unwrap().keep(j / positions)).count();
        }
    }
    total
}

#[test]
fn all_ones_is_exactly_one_hundred_percent() {
    let net = toy_net(1, vec![]);
    let ones = net.masks().to_vec();
    assert_eq!(remaining_param_fraction(&net, &ones).unwrap(), 100.0);
    assert_eq!(flops_fraction(&net, &ones).unwrap(), 100.0);
}

#[test]
fn param_fraction_matches_entry_enumeration() {
    let mut rng = rng_for(7, 3);
    for seed in 0..20 {
        let net = toy_net(seed, if seed % 2 == 0 { vec![] } else { vec![5] });
        let masks: Vec<Mask> = net
            .conv_layers()
            .iter()
            .map(|l| Mask::from_bools((0..l.spec.num_filters).map(|_| rng.gen_bool(0.6)).collect()))
            .collect();
        let expect = 100.0 * enumerate_surviving_params(&net, &masks) as f64 / net.param_count() as f64;
        let got = remaining_param_fraction(&net, &masks).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert_eq!(macs(&net, &masks).unwrap(), enumerate_macs(&net, &masks));
    }
}

#[test]
fn single_layer_holding_params_halved() {
    // one conv layer with 4 filters, head reads its 2x2 output
    let arch = Architecture {
        input_channels: 2,
        input_height: 2,
        input_width: 2,
        conv: vec![ConvShape { filters: 4, kernel_size: 1, stride: 1, padding: 0 }],
        head_hidden: vec![],
        classes: 2,
    };
    let net = Network::new(&arch, &mut rng_for(0, 0)).unwrap();
    // conv: 4 * (2 + 1) = 12; head: 2 * (16 + 1) = 34
    assert_eq!(net.param_count(), 46);
    let half = vec![Mask::from_bools(vec![true, false, true, false])];
    // conv: 2 * 3 = 6; head: 2 * (8 + 1) = 18
    let expect = 100.0 * 24.0 / 46.0;
    assert!((remaining_param_fraction(&net, &half).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn flops_hand_counted_two_layer_net() {
    // conv1: 3 -> 4 filters, k3 s1 p1 on 6x6 (36 positions)
    // conv2: 4 -> 6 filters, k3 s2 p0 -> 2x2 (4 positions); head 24 -> 3
    let net = toy_net(3, vec![]);
    let full_macs = 4 * 3 * 9 * 36 + 6 * 4 * 9 * 4 + 3 * 24;
    assert_eq!(macs(&net, net.masks()).unwrap(), full_macs);
    let masks = vec![Mask::from_bools(vec![true, false, true, false]), Mask::ones(6)];
    let pruned = 2 * 3 * 9 * 36 + 6 * 2 * 9 * 4 + 3 * 24;
    let got = flops_fraction(&net, &masks).unwrap();
    assert!((got - 100.0 * pruned as f64 / full_macs as f64).abs() < 1e-12);
}

#[test]
fn masking_a_layer_reduces_its_and_the_next_layer_macs() {
    let net = toy_net(3, vec![]);
    let geoms = net.conv_geometry();
    let full = net.masks().to_vec();
    let mut masks = full.clone();
    masks[0] = Mask::from_bools(vec![true, true, true, false]);
    let layer_macs = |m: &[Mask], t: usize| {
        let live_in = if t == 0 { 3 } else { m[t - 1].kept() };
        geoms[t].macs(m[t].kept(), live_in)
    };
    assert!(layer_macs(&masks, 0) < layer_macs(&full, 0));
    assert!(layer_macs(&masks, 1) < layer_macs(&full, 1));
    assert!(flops_fraction(&net, &masks).unwrap() < 100.0);
}

proptest! {
    #[test]
    fn costs_are_monotone_under_extra_zeros(
        bits in prop::collection::vec(any::<bool>(), 10),
        flip in 0usize..10,
    ) {
        let net = toy_net(5, vec![]);
        let mut keep0: Vec<bool> = bits[..4].to_vec();
        let mut keep1: Vec<bool> = bits[4..].to_vec();
        keep0[0] = true;
        keep1[0] = true;
        let masks = vec![Mask::from_bools(keep0.clone()), Mask::from_bools(keep1.clone())];
        if flip < 4 { keep0[flip] = false } else { keep1[flip - 4] = false }
        let fewer = vec![Mask::from_bools(keep0), Mask::from_bools(keep1)];
        prop_assert!(remaining_param_fraction(&net, &fewer).unwrap() <= remaining_param_fraction(&net, &masks).unwrap());
        prop_assert!(flops_fraction(&net, &fewer).unwrap() <= flops_fraction(&net, &masks).unwrap());
        // purity
        prop_assert_eq!(remaining_param_fraction(&net, &masks).unwrap(), remaining_param_fraction(&net, &masks).unwrap());
    }
}

#[test]
fn external_cost_reads_request_and_returns_number() {
    let net = toy_net(1, vec![]);
    let masks = vec![Mask::from_bools(vec![true, false, true, false]), Mask::ones(6)];
    let external = CostFunction::External("grep -o '\"remaining_params\":[0-9]*' | cut -d: -f2".into());
    let value = external.evaluate(&net, &masks, Some(60)).unwrap();
    let expect = crlprune::pruner::remaining_params(&net, &masks).unwrap() as f64;
    assert_eq!(value, expect);
}

#[test]
fn external_cost_failures_are_reported() {
    let net = toy_net(1, vec![]);
    let masks = net.masks().to_vec();
    for cmd in ["exit 3", "echo not-a-number", "echo -1", "cat > /dev/null; echo nan"] {
        let err = CostFunction::External(cmd.into()).evaluate(&net, &masks, None);
        assert!(err.is_err(), "{cmd} should fail");
    }
}
