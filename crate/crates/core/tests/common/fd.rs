//! Central-difference checks of the micro-CNN's analytic gradients against
//! the f64 reference network.

use camforge::cnn::{backward_to_class, forward, generate_shapes, ModelParams, STAGE_CHANNELS};
use camforge::tensor::Tensor3;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::reference_net::{run, Net64, Probe};

pub const H: f64 = 1e-3;
pub const COORDS: usize = 200;
pub const REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    /// Coordinates that entered the comparison.
    pub checked: usize,
    /// Coordinates the group must cover.
    pub needed: usize,
    pub worst: f64,
}

impl GroupCheck {
    pub fn passed(&self) -> bool {
        self.checked >= self.needed && self.worst <= REL_TOL
    }
}

/// Init weights plus small random biases, so no unit sits exactly at zero.
pub fn params(seed: u64) -> ModelParams {
    let mut p = ModelParams::init(3, seed);
    let mut rng = super::rng(seed ^ 1);
    for s in &mut p.stages {
        for b in &mut s.bias {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    for b in &mut p.classifier_bias {
        *b = rng.gen_range(-0.1..0.1);
    }
    p
}

pub fn input(seed: u64) -> (Tensor3, Vec<f64>) {
    let x = generate_shapes(1, seed).remove(0).image;
    let x64 = x.data().iter().map(|&v| v as f64).collect();
    (x, x64)
}

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4)
}

fn same_slope(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()) + 1e-9
}

/// Finite differences over the candidates in shuffled order until `COORDS`
/// usable coordinates are found. A side of the nudge is linear when its two
/// half-step slopes agree; the central difference is used when both sides are
/// linear, the one-sided slope when only one is, and the coordinate is skipped
/// when a ReLU or pool kink sits on both sides or exactly at the point.
fn check_group(
    candidates: Vec<usize>,
    seed: u64,
    analytic: impl Fn(usize) -> f64 + Sync,
    eval: impl Fn(usize, f64) -> f64 + Sync,
) -> (usize, f64) {
    let mut rng = super::rng(seed);
    let order: Vec<usize> =
        sample(&mut rng, candidates.len(), candidates.len()).iter().map(|k| candidates[k]).collect();
    let Some(&first) = order.first() else {
        return (0, 0.0);
    };
    let zero = eval(first, 0.0);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for chunk in order.chunks(64) {
        let errors: Vec<Option<f64>> = chunk
            .par_iter()
            .map(|&i| {
                let (plus, minus) = (eval(i, H), eval(i, -H));
                let (half_plus, half_minus) = (eval(i, H / 2.0), eval(i, -H / 2.0));
                let right = same_slope((half_plus - zero) / (H / 2.0), (plus - half_plus) / (H / 2.0));
                let left = same_slope((zero - half_minus) / (H / 2.0), (half_minus - minus) / (H / 2.0));
                let fd = match (left, right) {
                    (true, true) if same_slope((plus - zero) / H, (zero - minus) / H) => (plus - minus) / (2.0 * H),
                    (true, true) => return None,
                    (false, true) => (plus - zero) / H,
                    (true, false) => (zero - minus) / H,
                    (false, false) => return None,
                };
                Some(rel_err(fd, analytic(i)))
            })
            .collect();
        for e in errors.into_iter().flatten() {
            if checked == COORDS {
                return (checked, worst);
            }
            worst = worst.max(e);
            checked += 1;
        }
    }
    (checked, worst)
}

fn group(name: String, candidates: usize, (checked, worst): (usize, f64)) -> GroupCheck {
    GroupCheck { name, checked, needed: COORDS.min(candidates / 2), worst }
}

fn activation_sizes() -> Vec<usize> {
    STAGE_CHANNELS.iter().enumerate().map(|(n, &c)| c * (32 >> n) * (32 >> n)).collect()
}

/// Input, pre-activation and activation gradients of every class logit.
pub fn hidden_groups() -> Vec<GroupCheck> {
    let p = params(3);
    let net = Net64::from(&p);
    let (x, x64) = input(4);
    let tape = forward(&p, &x).unwrap();
    let mut out = Vec::new();
    for c in 0..3 {
        let g = backward_to_class(&p, &tape, c).unwrap();
        let logit = |probe: Probe, h: f64| run(&net, &x64, probe, h)[c];
        let all: Vec<usize> = (0..x64.len()).collect();
        let r = check_group(all, 100 + c as u64, |i| g.input[i] as f64, |i, h| logit(Probe::Input(i), h));
        out.push(group(format!("input class {c}"), x64.len(), r));
        for (n, &len) in activation_sizes().iter().enumerate() {
            let r = check_group(
                (0..len).collect(),
                200 + n as u64,
                |i| g.pre_activations[n][i] as f64,
                |i, h| logit(Probe::Pre(n, i), h),
            );
            out.push(group(format!("pre-activation s{} class {c}", n + 1), len, r));
            // A zero activation can tie for its pool window, which puts a kink
            // exactly at the unperturbed point.
            let live: Vec<usize> = (0..len).filter(|&i| tape.stages[n].activation[i] > 0.0).collect();
            let count = live.len();
            let r =
                check_group(live, 300 + n as u64, |i| g.activations[n][i] as f64, |i, h| logit(Probe::Act(n, i), h));
            out.push(group(format!("activation s{} class {c}", n + 1), count, r));
        }
    }
    out
}

/// Kernel, bias and classifier-weight gradients of one class logit.
pub fn parameter_groups() -> Vec<GroupCheck> {
    let p = params(5);
    let net = Net64::from(&p);
    let (x, x64) = input(6);
    let tape = forward(&p, &x).unwrap();
    let c = 1;
    let g = backward_to_class(&p, &tape, c).unwrap();
    let nudged = |edit: &dyn Fn(&mut Net64)| {
        let mut n = net.clone();
        edit(&mut n);
        run(&n, &x64, Probe::None, 0.0)[c]
    };
    let mut out = Vec::new();
    // A bias nudge shifts a whole channel, so early-stage biases rarely sit in
    // a linear piece; the conv biases are pooled into one group and are also
    // covered by the spatial-sum identity against the pre-activation gradient.
    let (mut bias_checked, mut bias_total, mut bias_worst) = (0, 0, 0.0f64);
    for n in 0..3 {
        let len = p.stages[n].kernels.len();
        let r = check_group(
            (0..len).collect(),
            400 + n as u64,
            |i| g.kernels[n][i] as f64,
            |i, h| nudged(&|net: &mut Net64| net.kernels[n][i] += h),
        );
        out.push(group(format!("kernels s{}", n + 1), len, r));
        let len = p.stages[n].bias.len();
        let (checked, worst) = check_group(
            (0..len).collect(),
            500 + n as u64,
            |i| g.biases[n][i] as f64,
            |i, h| nudged(&|net: &mut Net64| net.biases[n][i] += h),
        );
        bias_checked += checked;
        bias_total += len;
        bias_worst = bias_worst.max(worst);
    }
    out.push(GroupCheck {
        name: "conv biases".into(),
        checked: bias_checked,
        needed: bias_total / 2,
        worst: bias_worst,
    });
    let len = p.classifier_weights.len();
    let r = check_group(
        (0..len).collect(),
        600,
        |i| g.classifier_weights[i] as f64,
        |i, h| nudged(&|net: &mut Net64| net.fc_w[i] += h),
    );
    out.push(GroupCheck { needed: len, ..group("classifier weights".into(), len, r) });
    out
}
