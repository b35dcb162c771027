use alloc::vec::Vec;

use rand::seq::index::sample;

use super::{Tape, Tensor, Var};
use crate::rng::rng_from;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Denominator floor of the relative error, so gradients near zero are
    /// compared absolutely.
    pub floor: f64,
    /// Coordinates checked per parameter tensor; `None` checks all.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-3,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter, coordinate) of the worst error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU or L1 kink.
    pub excluded: usize,
}

fn evaluate<F>(params: &[Tensor<f64>], f: &mut F) -> Result<(f64, Option<u64>)>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_kink_tracking();
    let vars = params
        .iter()
        .map(|p| tape.variable(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    Ok((tape.value(loss).item()?, tape.kink_signature()))
}

/// Compares tape gradients of the scalar returned by `f` with central
/// finite differences, in 64-bit arithmetic. `f` must be deterministic.
pub fn grad_check<F>(params: &[Tensor<f64>], mut f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_kink_tracking();
    let vars = params
        .iter()
        .map(|p| tape.variable(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let base_sig = tape.kink_signature();
    let mut grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        excluded: 0,
    };
    let mut rng = rng_from(opts.seed);
    let mut work = params.to_vec();
    for (pi, &v) in vars.iter().enumerate() {
        let n = params[pi].numel();
        let analytic = grads.take(v).unwrap_or_else(|| Tensor::zeros(params[pi].shape()));
        let coords: Vec<usize> = match opts.max_coords {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let orig = params[pi].data()[j];
            work[pi].data_mut()[j] = orig + opts.eps;
            let (fp, sp) = evaluate(&work, &mut f)?;
            work[pi].data_mut()[j] = orig - opts.eps;
            let (fm, sm) = evaluate(&work, &mut f)?;
            work[pi].data_mut()[j] = orig;
            if sp != base_sig || sm != base_sig {
                report.excluded += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((pi, j));
                }
            }
        }
    }
    Ok(report)
}

/// Outcome of one randomized case of [`layer_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub input_shape: Vec<usize>,
    pub report: GradCheckReport,
}

/// Layers exercised by [`layer_suite`], in rotation order.
pub const SUITE_LAYERS: [&str; 17] = [
    "conv2d_zero_s1",
    "conv2d_zero_s2",
    "conv2d_reflect_s1",
    "conv2d_reflect_k7",
    "upsample2x_conv",
    "instance_norm_affine",
    "batch_norm",
    "ifn_joint",
    "ifn_per_channel",
    "restore_moments",
    "row_bias",
    "leaky_relu",
    "relu",
    "linear_pool_xent",
    "l1",
    "mse",
    "stack_conv_in_lrelu",
];

/// Finite-difference checks of every differentiable layer on `cases`
/// randomized small shapes, cycling through [`SUITE_LAYERS`].
pub fn layer_suite(cases: usize, seed: u64) -> Result<Vec<LayerCheck>> {
    use super::{Conv2dSpec, PadMode, ReduceAxes};
    use rand::Rng;

    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(cases);
    for case in 0..cases {
        let layer = SUITE_LAYERS[case % SUITE_LAYERS.len()];
        let n = rng.random_range(1..=2);
        let c = rng.random_range(1..=3);
        let h = rng.random_range(4..=7);
        let w = rng.random_range(4..=7);
        let co = rng.random_range(1..=3);
        let x = Tensor::<f64>::randn(&[n, c, h, w], 1.0, &mut rng);
        let opts = GradCheckOptions {
            seed: rng.random(),
            ..Default::default()
        };
        let conv_case = |k: usize, spec: Conv2dSpec, rng: &mut _| {
            let kernel = Tensor::<f64>::randn(&[co, c, k, k], 0.5, rng);
            let bias = Tensor::<f64>::randn(&[co], 0.5, rng);
            let target = Tensor::<f64>::randn(&[n, co, h, w], 1.0, rng);
            (vec_of(&[&x, &kernel, &bias]), spec, target)
        };
        let report = match layer {
            "conv2d_zero_s1" | "conv2d_zero_s2" | "conv2d_reflect_s1" | "conv2d_reflect_k7" => {
                let (k, spec) = match layer {
                    "conv2d_zero_s1" => (3, Conv2dSpec::new(1, 1, PadMode::Zero)),
                    "conv2d_zero_s2" => (4, Conv2dSpec::new(2, 1, PadMode::Zero)),
                    "conv2d_reflect_s1" => (3, Conv2dSpec::new(1, 1, PadMode::Reflect)),
                    _ => (7, Conv2dSpec::new(1, 3, PadMode::Reflect)),
                };
                let (params, spec, _) = conv_case(k, spec, &mut rng);
                let weights = Tensor::<f64>::randn(&[1024], 1.0, &mut rng);
                grad_check(
                    &params,
                    |t, v| {
                        let y = t.conv2d(v[0], v[1], Some(v[2]), spec)?;
                        weighted_sum(t, y, &weights)
                    },
                    opts,
                )?
            }
            "upsample2x_conv" => {
                let (params, spec, _) = conv_case(3, Conv2dSpec::new(1, 1, PadMode::Reflect), &mut rng);
                let weights = Tensor::<f64>::randn(&[4096], 1.0, &mut rng);
                grad_check(
                    &params,
                    |t, v| {
                        let u = t.upsample2x(v[0])?;
                        let y = t.conv2d(u, v[1], Some(v[2]), spec)?;
                        weighted_sum(t, y, &weights)
                    },
                    opts,
                )?
            }
            "instance_norm_affine" | "batch_norm" | "ifn_joint" | "ifn_per_channel" => {
                let axes = match layer {
                    "instance_norm_affine" => ReduceAxes::INSTANCE,
                    "batch_norm" => ReduceAxes::BATCH,
                    "ifn_joint" => ReduceAxes::FREQ_JOINT,
                    _ => ReduceAxes::FREQ_PER_CHANNEL,
                };
                let gamma = Tensor::<f64>::randn(&[c], 1.0, &mut rng);
                let beta = Tensor::<f64>::randn(&[c], 1.0, &mut rng);
                let weights = Tensor::<f64>::randn(&[1024], 1.0, &mut rng);
                grad_check(
                    &vec_of(&[&x, &gamma, &beta]),
                    |t, v| {
                        let z = t.standardize(v[0], axes, 1e-5)?;
                        let y = t.channel_affine(z, v[1], v[2])?;
                        weighted_sum(t, y, &weights)
                    },
                    opts,
                )?
            }
            "restore_moments" => {
                let y = Tensor::<f64>::randn(&[n, 1, h, w], 1.0, &mut rng);
                let weights = Tensor::<f64>::randn(&[1024], 1.0, &mut rng);
                grad_check(
                    &vec_of(&[&y, &x]),
                    |t, v| {
                        let r = t.restore_moments(v[0], v[1], 1e-5)?;
                        weighted_sum(t, r, &weights)
                    },
                    opts,
                )?
            }
            "row_bias" => {
                let b = Tensor::<f64>::randn(&[h], 1.0, &mut rng);
                let weights = Tensor::<f64>::randn(&[1024], 1.0, &mut rng);
                grad_check(
                    &vec_of(&[&x, &b]),
                    |t, v| {
                        let r = t.row_bias(v[0], v[1])?;
                        weighted_sum(t, r, &weights)
                    },
                    opts,
                )?
            }
            "leaky_relu" | "relu" => {
                let weights = Tensor::<f64>::randn(&[1024], 1.0, &mut rng);
                let leaky = layer == "leaky_relu";
                grad_check(
                    &vec_of(&[&x]),
                    |t, v| {
                        let y = if leaky { t.leaky_relu(v[0], 0.2)? } else { t.relu(v[0])? };
                        weighted_sum(t, y, &weights)
                    },
                    opts,
                )?
            }
            "linear_pool_xent" => {
                let k = co + 1;
                let wt = Tensor::<f64>::randn(&[k, c], 1.0, &mut rng);
                let b = Tensor::<f64>::randn(&[k], 1.0, &mut rng);
                let mut targets = Tensor::<f64>::from_fn(&[n, k], |_| rng.random_range(0.0..1.0));
                for row in targets.data_mut().chunks_exact_mut(k) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                grad_check(
                    &vec_of(&[&x, &wt, &b]),
                    |t, v| {
                        let p = t.global_avg_pool(v[0])?;
                        let l = t.linear(p, v[1], v[2])?;
                        t.soft_cross_entropy(l, &targets)
                    },
                    opts,
                )?
            }
            "l1" | "mse" => {
                let y = Tensor::<f64>::randn(&[n, c, h, w], 1.0, &mut rng);
                let l1 = layer == "l1";
                grad_check(
                    &vec_of(&[&x, &y]),
                    |t, v| {
                        let s = t.scale(v[0], 1.5)?;
                        let p = t.mul(s, v[1])?;
                        let d = t.sub(p, v[1])?;
                        if l1 {
                            t.l1(d, v[0])
                        } else {
                            let a = t.mse(d, v[0])?;
                            let b = t.mse_const(v[1], 0.5)?;
                            t.add(a, b)
                        }
                    },
                    opts,
                )?
            }
            _ => {
                let (params, spec, target) = conv_case(3, Conv2dSpec::new(1, 1, PadMode::Reflect), &mut rng);
                let gamma = Tensor::<f64>::randn(&[co], 1.0, &mut rng);
                let beta = Tensor::<f64>::randn(&[co], 1.0, &mut rng);
                let mut all = params;
                all.extend([gamma, beta]);
                grad_check(
                    &all,
                    |t, v| {
                        let y = t.conv2d(v[0], v[1], Some(v[2]), spec)?;
                        let y = t.instance_norm(y, Some((v[3], v[4])), 1e-5)?;
                        let y = t.leaky_relu(y, 0.2)?;
                        let tgt = t.constant(target.clone())?;
                        t.mse(y, tgt)
                    },
                    opts,
                )?
            }
        };
        out.push(LayerCheck {
            layer,
            input_shape: x.shape().to_vec(),
            report,
        });
    }
    Ok(out)
}

fn vec_of(ts: &[&Tensor<f64>]) -> Vec<Tensor<f64>> {
    ts.iter().map(|&t| t.clone()).collect()
}

/// `Σ y_i · w_i` with fixed pseudo-random weights, so every output element
/// carries a distinct sensitivity.
fn weighted_sum(t: &mut Tape<f64>, y: Var, weights: &Tensor<f64>) -> Result<Var> {
    let n = t.value(y).numel();
    let w = Tensor::new(t.value(y).shape(), weights.data()[..n].to_vec())?;
    let w = t.constant(w)?;
    let p = t.mul(y, w)?;
    t.sum(p)
}
