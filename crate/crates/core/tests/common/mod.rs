//! Central finite-difference checks shared by the gradient and acceptance
//! test targets. Each check returns the worst relative error it saw.

#![allow(dead_code)]

use pulsekin::layers::{self, Tensor};
use pulsekin::net::{contrastive_loss, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const DRAWS: u64 = 30;

/// Gradients smaller than this are compared on an absolute scale.
const FLOOR: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst error of `analytic` against central differences of `f` around `x`,
/// skipping coordinates for which `skip` holds.
pub fn fd_max_err(x: &Tensor, analytic: &Tensor, f: impl Fn(&Tensor) -> f64, skip: impl Fn(usize) -> bool) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        if skip(i) {
            continue;
        }
        let v = x.data()[i];
        probe.data_mut()[i] = v + H;
        let up = f(&probe);
        probe.data_mut()[i] = v - H;
        let down = f(&probe);
        probe.data_mut()[i] = v;
        worst = worst.max(rel_err(analytic.data()[i], (up - down) / (2.0 * H)));
    }
    worst
}

pub fn conv_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cin = rng.random_range(1..4);
    let cout = rng.random_range(1..4);
    let k = [3, 5][rng.random_range(0..2)];
    let stride = rng.random_range(1..3);
    let w = rng.random_range(k..k + 12);
    let x = random(&mut rng, &[cin, w], 1.0);
    let wt = random(&mut rng, &[cout, cin, k], 1.0);
    let b = random(&mut rng, &[cout], 1.0);
    let y = layers::conv1d_forward(&x, &wt, &b, stride).unwrap();
    let u = random(&mut rng, y.shape(), 1.0);
    let g = layers::conv1d_backward(&u, &x, &wt, stride).unwrap();
    let obj = |x: &Tensor, wt: &Tensor, b: &Tensor| dot(&u, &layers::conv1d_forward(x, wt, b, stride).unwrap());
    fd_max_err(&x, &g.input, |p| obj(p, &wt, &b), |_| false)
        .max(fd_max_err(&wt, &g.weight, |p| obj(&x, p, &b), |_| false))
        .max(fd_max_err(&b, &g.bias, |p| obj(&x, &wt, p), |_| false))
}

pub fn relu_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&mut rng, &[40], 2.0);
    let u = random(&mut rng, &[40], 1.0);
    let g = layers::relu_backward(&u, &x).unwrap();
    fd_max_err(&x, &g, |p| dot(&u, &layers::relu(p)), |i| x.data()[i].abs() < 1e-4)
}

pub fn gap_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(1..20);
    let x = random(&mut rng, &[3, w], 3.0);
    let u = random(&mut rng, &[3], 1.0);
    let g = layers::gap1d_backward(&u, w).unwrap();
    fd_max_err(&x, &g, |p| dot(&u, &layers::gap1d(p).unwrap()), |_| false)
}

pub fn linear_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..12);
    let m = rng.random_range(1..12);
    let x = random(&mut rng, &[n], 1.0);
    let wt = random(&mut rng, &[m, n], 1.0);
    let b = random(&mut rng, &[m], 1.0);
    let u = random(&mut rng, &[m], 1.0);
    let g = layers::linear_backward(&u, &x, &wt).unwrap();
    let obj = |x: &Tensor, wt: &Tensor, b: &Tensor| dot(&u, &layers::linear_forward(x, wt, b).unwrap());
    fd_max_err(&x, &g.input, |p| obj(p, &wt, &b), |_| false)
        .max(fd_max_err(&wt, &g.weight, |p| obj(&x, p, &b), |_| false))
        .max(fd_max_err(&b, &g.bias, |p| obj(&x, &wt, p), |_| false))
}

pub fn sigmoid_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&mut rng, &[30], 6.0);
    let u = random(&mut rng, &[30], 1.0);
    let g = layers::sigmoid_backward(&u, &layers::sigmoid(&x)).unwrap();
    fd_max_err(&x, &g, |p| dot(&u, &layers::sigmoid(p)), |_| false)
}

pub fn dropout_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&mut rng, &[50], 1.0);
    let u = random(&mut rng, &[50], 1.0);
    let (_, mask) = layers::dropout(&x, 0.3, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let g = layers::dropout_backward(&u, mask.as_deref());
    // Replaying the seed reproduces the mask on every perturbed evaluation.
    let f = |p: &Tensor| dot(&u, &layers::dropout(p, 0.3, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().0);
    fd_max_err(&x, &g, f, |_| false)
}

pub fn attention_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, w, h) = (8, 6, 2);
    let feature = random(&mut rng, &[c, w], 2.0);
    let mut params = vec![
        random(&mut rng, &[h, c], 1.0),
        random(&mut rng, &[h], 1.0),
        random(&mut rng, &[c, h], 1.0),
        random(&mut rng, &[c], 1.0),
    ];
    let u = random(&mut rng, &[c, w], 1.0);
    let mut grads: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
    let gx = pulsekin::net::channel_attention_backward(&u, &feature, &params, &mut grads).unwrap();
    // Hidden pre-activations near zero make the objective non-smooth.
    let hidden = |f: &Tensor, ps: &[Tensor]| layers::linear_forward(&layers::gap1d(f).unwrap(), &ps[0], &ps[1]).unwrap();
    let near_kink = |f: &Tensor, ps: &[Tensor]| hidden(f, ps).data().iter().any(|v| v.abs() < 1e-3);
    if near_kink(&feature, &params) {
        return 0.0;
    }
    let obj = |f: &Tensor, ps: &[Tensor]| dot(&u, &pulsekin::net::channel_attention(f, ps).unwrap());
    let mut worst = fd_max_err(&feature, &gx, |p| obj(p, &params), |_| false);
    for i in 0..params.len() {
        let base = params[i].clone();
        worst = worst.max(fd_max_err(
            &base,
            &grads[i],
            |p| {
                let mut ps = params.clone();
                ps[i] = p.clone();
                obj(&feature, &ps)
            },
            |_| false,
        ));
        params[i] = base;
    }
    worst
}

pub fn contrastive_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random(&mut rng, &[6], 0.4);
    let b = random(&mut rng, &[6], 0.4);
    let kin = seed % 2 == 0;
    let form = if seed % 3 == 0 { pulsekin::net::LossForm::Literal } else { pulsekin::net::LossForm::Standard };
    let l = contrastive_loss(&a, &b, kin, 1.0, form).unwrap();
    let d = match form {
        pulsekin::net::LossForm::Standard => l.distance,
        pulsekin::net::LossForm::Literal => l.distance * l.distance,
    };
    if !kin && (1.0 - d).abs() < 1e-4 {
        return 0.0;
    }
    let f = |p: &Tensor, q: &Tensor| contrastive_loss(p, q, kin, 1.0, form).unwrap().loss;
    fd_max_err(&a, &l.grad_p, |p| f(p, &b), |_| false).max(fd_max_err(&b, &l.grad_c, |q| f(&a, q), |_| false))
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        in_channels: 4,
        input_len: 32,
        conv_channels: vec![4, 8],
        fc_dims: vec![16, 8, 4],
        dropout_rate: 0.0,
        ..Default::default()
    }
}

/// Full siamese loss gradient on the tiny network with dropout off.
/// Coordinates whose ±h probes change any ReLU sign are excluded.
pub fn network_check(seed: u64) -> f64 {
    let cfg = tiny_config();
    let params = ModelParams::init(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let p = random(&mut rng, &[4, 32], 2.0);
    let c = random(&mut rng, &[4, 32], 2.0);
    let kin = seed % 2 == 1;

    let loss_of = |ps: &ModelParams| {
        let fp = ps.forward_eval(&p).unwrap();
        let fc = ps.forward_eval(&c).unwrap();
        let l = contrastive_loss(fp.output(), fc.output(), kin, cfg.margin, cfg.loss).unwrap();
        (l, fp, fc)
    };
    let (l, fp, fc) = loss_of(&params);
    if !kin && (cfg.margin - l.distance).abs() < 1e-4 {
        return 0.0;
    }
    let mut acc = params.gradients();
    params.backward(&fp, &l.grad_p, &mut acc).unwrap();
    params.backward(&fc, &l.grad_c, &mut acc).unwrap();
    let grads = acc.finish();

    let pattern = |ps: &ModelParams| {
        let (_, a, b) = loss_of(ps);
        (a.relu_pattern(), b.relu_pattern())
    };
    let base_pattern = pattern(&params);
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for t in 0..params.tensors().len() {
        for i in 0..params.tensors()[t].len() {
            let v = params.tensors()[t].data()[i];
            probe.tensors_mut()[t].data_mut()[i] = v + H;
            let (up, _, _) = loss_of(&probe);
            let smooth_up = pattern(&probe) == base_pattern;
            probe.tensors_mut()[t].data_mut()[i] = v - H;
            let (down, _, _) = loss_of(&probe);
            let smooth_down = pattern(&probe) == base_pattern;
            probe.tensors_mut()[t].data_mut()[i] = v;
            if !(smooth_up && smooth_down) {
                continue;
            }
            worst = worst.max(rel_err(grads[t].data()[i], (up.loss - down.loss) / (2.0 * H)));
        }
    }
    worst
}

pub type Check = fn(u64) -> f64;

pub const LAYER_CHECKS: [(&str, Check); 8] = [
    ("conv1d", conv_check),
    ("relu", relu_check),
    ("gap1d", gap_check),
    ("linear", linear_check),
    ("sigmoid", sigmoid_check),
    ("dropout", dropout_check),
    ("channel attention", attention_check),
    ("contrastive loss", contrastive_check),
];

/// Worst error over [`DRAWS`] seeds.
pub fn worst_over_draws(check: Check) -> f64 {
    (0..DRAWS).map(check).fold(0.0, f64::max)
}
