use irs_vlc::neural::{soft_update, Activation, AdamState, Mlp, ReplayBuffer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Forward pass through explicit weight matrices rebuilt from the flat
/// parameter layout.
fn matrix_forward(sizes: &[usize], acts: &[Activation], params: &[f64], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut off = 0;
    for (l, act) in acts.iter().enumerate() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w: Vec<Vec<f64>> = (0..n_out)
            .map(|o| params[off + o * n_in..off + (o + 1) * n_in].to_vec())
            .collect();
        let b = &params[off + n_in * n_out..off + n_out * (n_in + 1)];
        let z: Vec<f64> = (0..n_out)
            .map(|o| b[o] + (0..n_in).map(|i| w[o][i] * x[i]).sum::<f64>())
            .collect();
        x = z
            .into_iter()
            .map(|z| match act {
                Activation::Relu => {
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                }
                Activation::Tanh => (z.exp() - (-z).exp()) / (z.exp() + (-z).exp()),
                Activation::Identity => z,
            })
            .collect();
        off += n_out * (n_in + 1);
    }
    x
}

#[test]
fn forward_matches_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sizes = [4, 8, 3];
    for acts in [
        [Activation::Relu, Activation::Tanh],
        [Activation::Tanh, Activation::Identity],
    ] {
        let net = Mlp::<f64>::new(&sizes, &acts, &mut rng).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = net.forward(&x).unwrap();
            let y_o = matrix_forward(&sizes, &acts, net.params(), &x);
            for (a, b) in y.iter().zip(&y_o) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
}

fn vector_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let archs: [(&[usize], &[Activation]); 3] = [
        (&[3, 5, 2], &[Activation::Tanh, Activation::Identity]),
        (
            &[6, 16, 8, 1],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
        ),
        (
            &[10, 32, 32, 4],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        ),
    ];
    for (sizes, acts) in archs {
        let net = Mlp::<f64>::new(sizes, acts, &mut rng).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let objective = |n: &Mlp<f64>, x: &[f64]| n.forward(x).unwrap().iter().zip(&g).map(|(y, w)| y * w).sum::<f64>();
        let cache = net.forward_cached(&x).unwrap();
        let (dp, dx) = net.backward(&cache, &g).unwrap();

        let mut fd_p = Vec::with_capacity(net.param_count());
        for i in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            fd_p.push((objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h));
        }
        let fd_x: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h)
            })
            .collect();
        assert!(vector_rel_err(&dp, &fd_p) < 1e-4, "{sizes:?} params");
        assert!(vector_rel_err(&dx, &fd_x) < 1e-4, "{sizes:?} inputs");
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(100);
    for i in 0..100usize {
        buf.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 100];
    for _ in 0..1000 {
        for &&i in buf.sample(100, &mut rng).unwrap().iter() {
            counts[i] += 1;
        }
    }
    // 10^5 draws, expected 1000 per item; 5% is about 1.6 sigma, so check the
    // aggregate deviation and a loose per-item bound
    let total_dev: f64 = counts.iter().map(|&c| (c as f64 - 1000.0).abs()).sum::<f64>() / 100.0;
    assert!(total_dev < 50.0, "mean abs deviation {total_dev}");
    assert!(counts.iter().all(|&c| (c as f64 - 1000.0).abs() < 150.0));
}

#[test]
fn replay_evicts_oldest_first() {
    let mut buf = ReplayBuffer::new(3);
    for i in 0..5 {
        buf.push(i);
    }
    assert_eq!(buf.len(), 3);
    let mut held: Vec<i32> = buf.iter().copied().collect();
    held.sort();
    assert_eq!(held, vec![2, 3, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(buf.sample(4, &mut rng).is_err());
    assert!(buf.sample(0, &mut rng).is_err());
}

#[test]
fn soft_update_examples() {
    let sizes = [1, 1];
    let acts = [Activation::Identity];
    let mut target = Mlp::<f64>::zeros(&sizes, &acts).unwrap();
    let mut online = Mlp::<f64>::zeros(&sizes, &acts).unwrap();
    online.params_mut().copy_from_slice(&[2.0, -4.0]);
    soft_update(&mut target, &online, 0.25).unwrap();
    assert_eq!(target.params(), &[0.5, -1.0]);
    soft_update(&mut target, &online, 1.0).unwrap();
    assert_eq!(target.params(), online.params());
    let before = target.clone();
    soft_update(&mut target, &online, 0.0).unwrap();
    assert_eq!(target.params(), before.params());
    assert!(soft_update(&mut target, &online, 1.5).is_err());
    let other = Mlp::<f64>::zeros(&[2, 1], &acts).unwrap();
    assert!(soft_update(&mut target, &other, 0.5).is_err());
}

#[test]
fn repeated_soft_updates_close_the_gap_geometrically() {
    let acts = [Activation::Identity];
    let mut target = Mlp::<f64>::zeros(&[1, 1], &acts).unwrap();
    let mut online = Mlp::<f64>::zeros(&[1, 1], &acts).unwrap();
    online.params_mut().copy_from_slice(&[1.0, 1.0]);
    let tau = 0.01;
    for _ in 0..100 {
        soft_update(&mut target, &online, tau).unwrap();
    }
    let gap = 1.0 - target.params()[0];
    assert!((gap - (1.0f64 - tau).powi(100)).abs() < 1e-12);
}

#[test]
fn adam_descends_on_a_fixed_regression_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sizes = [3, 16, 1];
    let acts = [Activation::Tanh, Activation::Identity];
    let mut net = Mlp::<f64>::new(&sizes, &acts, &mut rng).unwrap();
    let data: Vec<(Vec<f64>, f64)> = (0..32)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = x[0] - 0.5 * x[1] * x[2];
            (x, y)
        })
        .collect();
    let loss_and_grad = |net: &Mlp<f64>| {
        let mut grads = vec![0.0; net.param_count()];
        let mut loss = 0.0;
        for (x, y) in &data {
            let cache = net.forward_cached(x).unwrap();
            let d = cache.output()[0] - y;
            loss += d * d / 32.0;
            net.backward_into(&cache, &[2.0 * d / 32.0], &mut grads).unwrap();
        }
        (loss, grads)
    };
    let mut opt = AdamState::new(net.param_count(), 1e-4);
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let (loss, grads) = loss_and_grad(&net);
        assert!(loss <= last, "{loss} > {last}");
        last = loss;
        opt.step_network(&mut net, &grads).unwrap();
    }
    assert_eq!(opt.steps(), 10);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::<f64>::new(&[5, 7, 3], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
    let mut bytes = Vec::new();
    net.write_checkpoint(&mut bytes).unwrap();
    let back = Mlp::<f64>::read_checkpoint(&mut bytes.as_slice()).unwrap();
    assert_eq!(back.sizes(), net.sizes());
    assert_eq!(back.activations(), net.activations());
    assert!(back
        .params()
        .iter()
        .zip(net.params())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    let mut again = Vec::new();
    back.write_checkpoint(&mut again).unwrap();
    assert_eq!(bytes, again);

    let net32 = Mlp::<f32>::new(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
    let mut b32 = Vec::new();
    net32.write_checkpoint(&mut b32).unwrap();
    assert!(Mlp::<f64>::read_checkpoint(&mut b32.as_slice()).is_err());
    assert!(Mlp::<f64>::read_checkpoint(&mut &b"garbage\n"[..]).is_err());
}

proptest! {
    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::<f64>::new(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        let cache = net.forward_cached(&[0.1, -0.2, 0.3]).unwrap();
        let (dp, dx) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        prop_assert!(dp.iter().chain(&dx).all(|&g| g == 0.0));
    }
}
