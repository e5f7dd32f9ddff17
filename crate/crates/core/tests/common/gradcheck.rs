//! Central finite-difference checks for layers, small networks and the loss.

use depthvox::nn::{Conv2dSpec, Network, NetworkBuilder};
use depthvox::tensor::Tensor;
use depthvox::training::{weighted_bce, weighted_squared_error};
use rand::Rng;

const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-3;
/// Coordinates probed per parameter tensor or input.
const MAX_PROBES: usize = 64;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    FullyConnected,
    SharedFullyConnected,
    Conv2d,
    LeakyRelu,
    Sigmoid,
    SmallNetwork,
    WeightedBce,
    SquaredError,
}

pub const ALL_KINDS: [CheckKind; 8] = [
    CheckKind::FullyConnected,
    CheckKind::SharedFullyConnected,
    CheckKind::Conv2d,
    CheckKind::LeakyRelu,
    CheckKind::Sigmoid,
    CheckKind::SmallNetwork,
    CheckKind::WeightedBce,
    CheckKind::SquaredError,
];

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub description: String,
    pub err64: f64,
    pub err32: f64,
}

fn random_conv(rng: &mut impl Rng) -> (Conv2dSpec, [usize; 3]) {
    loop {
        let spec = Conv2dSpec {
            in_channels: rng.gen_range(1..=3),
            out_channels: rng.gen_range(1..=3),
            kernel_size: rng.gen_range(1..=4),
            stride: rng.gen_range(1..=2),
            padding: rng.gen_range(0..=2),
        };
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=8);
        if spec.output_hw(h, w).is_ok() {
            return (spec, [spec.in_channels, h, w]);
        }
    }
}

fn build(kind: CheckKind, rng: &mut impl Rng) -> (Network<f64>, String) {
    let alpha = 0.01;
    let (b, desc) = match kind {
        CheckKind::FullyConnected => {
            let (i, o) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
            (
                NetworkBuilder::new(&[i]).fully_connected("fc", i, o),
                format!("fc {i}->{o}"),
            )
        }
        CheckKind::SharedFullyConnected => {
            let (s, i, o) = (rng.gen_range(2..=4), rng.gen_range(1..=8), rng.gen_range(1..=8));
            (
                NetworkBuilder::new(&[s * i]).fully_connected("fc", i, o),
                format!("shared fc {s}x({i}->{o})"),
            )
        }
        CheckKind::Conv2d => {
            let (spec, shape) = random_conv(rng);
            (
                NetworkBuilder::new(&shape).conv2d("conv", spec),
                format!("conv {spec:?} on {shape:?}"),
            )
        }
        CheckKind::LeakyRelu => {
            let n = rng.gen_range(1..=8);
            (NetworkBuilder::new(&[n]).leaky_relu(alpha), format!("leaky_relu [{n}]"))
        }
        CheckKind::Sigmoid => {
            let n = rng.gen_range(1..=8);
            (NetworkBuilder::new(&[n]).sigmoid(), format!("sigmoid [{n}]"))
        }
        CheckKind::SmallNetwork => {
            let (spec, shape) = random_conv(rng);
            let (oh, ow) = spec.output_hw(shape[1], shape[2]).unwrap();
            let flat = spec.out_channels * oh * ow;
            let o = rng.gen_range(1..=6);
            (
                NetworkBuilder::new(&shape)
                    .conv2d("conv", spec)
                    .leaky_relu(alpha)
                    .fully_connected("fc", flat, o)
                    .sigmoid(),
                format!("conv->lrelu->fc->sigmoid on {shape:?}"),
            )
        }
        CheckKind::WeightedBce | CheckKind::SquaredError => unreachable!(),
    };
    let mut net = b.build::<f64, _>(rng).unwrap();
    for g in net.params_mut().groups_mut() {
        for v in g.bias.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    (net, desc)
}

fn probe_indices(len: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= MAX_PROBES {
        (0..len).collect()
    } else {
        (0..MAX_PROBES).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Inputs kept away from the leaky-ReLU kink so central differences stay valid.
fn random_input(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen() {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn objective(net: &Network<f64>, x: &Tensor<f64>, r: &[f64]) -> f64 {
    let y = net.forward(x).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn check_network(kind: CheckKind, rng: &mut impl Rng) -> CheckResult {
    let (net, description) = build(kind, rng);
    let batch = rng.gen_range(1..=2);
    let mut shape = vec![batch];
    shape.extend_from_slice(net.input_shape());
    let n_in: usize = shape.iter().product();
    let x = Tensor::from_vec(&shape, random_input(n_in, rng)).unwrap();
    let n_out = batch * net.output_shape().iter().product::<usize>();
    let r: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let trace = net.forward_trace(&x).unwrap();
    let out_shape = trace.output().unwrap().shape().to_vec();
    let g64 = net
        .backward(&trace, &Tensor::from_vec(&out_shape, r.clone()).unwrap())
        .unwrap();
    let net32 = net.cast::<f32>();
    let x32 = x.cast::<f32>();
    let trace32 = net32.forward_trace(&x32).unwrap();
    let r32: Vec<f32> = r.iter().map(|&v| v as f32).collect();
    let g32 = net32
        .backward(&trace32, &Tensor::from_vec(&out_shape, r32).unwrap())
        .unwrap();

    let (mut err64, mut err32) = (0.0f64, 0.0f64);
    let mut record = |a64: f64, a32: f64, num: f64| {
        err64 = err64.max(rel_err(a64, num));
        err32 = err32.max(rel_err(a32, num));
    };

    for gi in 0..net.params().groups().len() {
        for which in 0..2 {
            let len = if which == 0 {
                net.params().groups()[gi].weight.len()
            } else {
                net.params().groups()[gi].bias.len()
            };
            for idx in probe_indices(len, rng) {
                let mut shifted = net.clone();
                let mut eval = |delta: f64| {
                    let g = &mut shifted.params_mut().groups_mut()[gi];
                    let t = if which == 0 { &mut g.weight } else { &mut g.bias };
                    t.data_mut()[idx] += delta;
                    let v = objective(&shifted, &x, &r);
                    let g = &mut shifted.params_mut().groups_mut()[gi];
                    let t = if which == 0 { &mut g.weight } else { &mut g.bias };
                    t.data_mut()[idx] -= delta;
                    v
                };
                let num = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
                let (a64, a32) = if which == 0 {
                    (g64.groups[gi].weight.data()[idx], g32.groups[gi].weight.data()[idx] as f64)
                } else {
                    (g64.groups[gi].bias.data()[idx], g32.groups[gi].bias.data()[idx] as f64)
                };
                record(a64, a32, num);
            }
        }
    }
    for idx in probe_indices(n_in, rng) {
        let eval = |delta: f64| {
            let mut xs = x.clone();
            xs.data_mut()[idx] += delta;
            objective(&net, &xs, &r)
        };
        let num = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
        record(g64.input.data()[idx], g32.input.data()[idx] as f64, num);
    }
    CheckResult {
        kind,
        description,
        err64,
        err32,
    }
}

fn check_loss(kind: CheckKind, rng: &mut impl Rng) -> CheckResult {
    let n = rng.gen_range(1..=8 * 8);
    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    let y: Vec<f64> = (0..n).map(|_| if rng.gen() { 1.0 } else { 0.0 }).collect();
    let w = rng.gen_range(0.01..1.0);
    let f = |p: &[f64]| match kind {
        CheckKind::WeightedBce => weighted_bce(p, &y, w).unwrap(),
        _ => weighted_squared_error(p, &y, w).unwrap(),
    };
    let (_, g64) = f(&p);
    let p32: Vec<f32> = p.iter().map(|&v| v as f32).collect();
    let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let (_, g32) = match kind {
        CheckKind::WeightedBce => weighted_bce(&p32, &y32, w).unwrap(),
        _ => weighted_squared_error(&p32, &y32, w).unwrap(),
    };
    let (mut err64, mut err32) = (0.0f64, 0.0f64);
    for i in 0..n {
        let mut q = p.clone();
        q[i] += STEP;
        let up = f(&q).0;
        q[i] -= 2.0 * STEP;
        let down = f(&q).0;
        let num = (up - down) / (2.0 * STEP);
        // Compare in units of the per-voxel gradient scale, as every entry carries a 1/n factor.
        let scale = n as f64;
        err64 = err64.max(rel_err(g64[i] * scale, num * scale));
        err32 = err32.max(rel_err(g32[i] as f64 * scale, num * scale));
    }
    CheckResult {
        kind,
        description: format!("{kind:?} over {n} voxels, w = {w:.3}"),
        err64,
        err32,
    }
}

pub fn run_check(kind: CheckKind, rng: &mut impl Rng) -> CheckResult {
    match kind {
        CheckKind::WeightedBce | CheckKind::SquaredError => check_loss(kind, rng),
        _ => check_network(kind, rng),
    }
}

/// Cycles through every kind until `count` random instances have been checked.
pub fn run_suite(count: usize, rng: &mut impl Rng) -> Vec<CheckResult> {
    (0..count)
        .map(|i| run_check(ALL_KINDS[i % ALL_KINDS.len()], rng))
        .collect()
}
