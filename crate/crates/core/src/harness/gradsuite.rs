//! Finite-difference checks of every differentiable operation.
//!
//! Analytic gradients are computed in `f32`; the reference central
//! differences evaluate the same operation in `f64` with `f32`-rounded
//! inputs. Operations without parameters are probed through the scalar
//! `sum(w * op(x))` for a random weighting `w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::arch::{network_gradcheck, ArchitectureSpec, DoubleUNetConfig, PocketUNetConfig};
use crate::error::Result;
use crate::nn::conv::{conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward};
use crate::nn::ops::{max_pool2, max_pool2_backward, relu, relu_backward, softmax_channels};
use crate::nn::{dice_ce_loss, finite_difference_check_at, one_hot2, BatchNorm3d, Shape, Tensor};

pub const OPS: [&str; 8] = [
    "conv3d",
    "conv_transpose3d",
    "batchnorm3d",
    "relu",
    "downsample",
    "dice_ce_loss",
    "pocket_unet",
    "double_unet",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteSettings {
    pub seeds: u64,
    pub tolerance: f64,
    pub eps: f64,
    /// Probed coordinates per tensor.
    pub probes: usize,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            seeds: 20,
            tolerance: 1e-3,
            eps: 1e-6,
            probes: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpResult {
    pub op: &'static str,
    pub seed: u64,
    /// Worst relative error over every probed tensor.
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub settings: SuiteSettings,
    pub results: Vec<OpResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// Worst error per op across seeds, in [`OPS`] order.
    pub fn worst_per_op(&self) -> Vec<(&'static str, f64, bool)> {
        OPS.iter()
            .filter_map(|&op| {
                let rs: Vec<&OpResult> = self.results.iter().filter(|r| r.op == op).collect();
                (!rs.is_empty()).then(|| {
                    let worst = rs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
                    (op, worst, rs.iter().all(|r| r.passed))
                })
            })
            .collect()
    }
}

fn normal(shape: Shape, rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f32> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| (rng.sample::<f64, _>(StandardNormal) * scale) as f32).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

fn probes(n: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, n);
    (0..count).map(|i| i * n / count + (n / count) / 2).map(|i| i.min(n - 1)).collect()
}

fn widen(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn weighted_sum(w: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    w.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Max relative error of `analytic` against central differences of `loss`
/// evaluated with the probed tensor replaced.
fn check<F>(base: &Tensor<f32>, analytic: &[f32], s: &SuiteSettings, mut loss: F) -> f64
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let shape = base.shape();
    let analytic: Vec<f64> = analytic.iter().map(|&v| v as f64).collect();
    let r = finite_difference_check_at(
        |theta| loss(&Tensor::from_vec(shape, theta.to_vec()).expect("same shape")),
        &widen(base),
        &analytic,
        s.eps,
        &probes(base.numel(), s.probes),
    );
    r.max_rel_error
}

fn conv3d_case(seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (stride, pad) = if seed.is_multiple_of(2) { (1, 1) } else { (2, 0) };
    let x = normal([2, 2, 5, 5, 5], &mut rng, 1.0);
    let w = normal([3, 2, 3, 3, 3], &mut rng, 0.3);
    let b = normal([3, 1, 1, 1, 1], &mut rng, 0.3);
    let y = conv3d_forward(&x, &w, Some(&b), stride, pad)?;
    let g = normal(y.shape(), &mut rng, 1.0);
    let (gx, gw, gb) = conv3d_backward(&x, &w, &g, stride, pad)?;
    let (x64, w64, b64, g64) = (x.cast::<f64>(), w.cast::<f64>(), b.cast::<f64>(), g.cast::<f64>());
    let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        weighted_sum(&g64, &conv3d_forward(x, w, Some(b), stride, pad).expect("valid conv"))
    };
    Ok([
        check(&x, gx.data(), s, |t| f(t, &w64, &b64)),
        check(&w, gw.data(), s, |t| f(&x64, t, &b64)),
        check(&b, &gb, s, |t| f(&x64, &w64, t)),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

fn conv_transpose_case(seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal([2, 2, 3, 3, 3], &mut rng, 1.0);
    let w = normal([2, 3, 2, 2, 2], &mut rng, 0.5);
    let b = normal([3, 1, 1, 1, 1], &mut rng, 0.3);
    let y = conv_transpose3d_forward(&x, &w, Some(&b), 2)?;
    let g = normal(y.shape(), &mut rng, 1.0);
    let (gx, gw, gb) = conv_transpose3d_backward(&x, &w, &g, 2)?;
    let (x64, w64, b64, g64) = (x.cast::<f64>(), w.cast::<f64>(), b.cast::<f64>(), g.cast::<f64>());
    let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        weighted_sum(&g64, &conv_transpose3d_forward(x, w, Some(b), 2).expect("valid conv"))
    };
    Ok([
        check(&x, gx.data(), s, |t| f(t, &w64, &b64)),
        check(&w, gw.data(), s, |t| f(&x64, t, &b64)),
        check(&b, &gb, s, |t| f(&x64, &w64, t)),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

fn batchnorm_case(seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal([2, 3, 3, 3, 3], &mut rng, 2.0);
    let gamma = normal([3, 1, 1, 1, 1], &mut rng, 1.0);
    let beta = normal([3, 1, 1, 1, 1], &mut rng, 1.0);
    let mut bn = BatchNorm3d::<f32>::new("bn", 3);
    *bn.gamma.value_mut() = gamma.clone();
    *bn.beta.value_mut() = beta.clone();
    let y = bn.forward(&x, true)?;
    let g = normal(y.shape(), &mut rng, 1.0);
    let gx = bn.backward(&g)?;
    let (ggamma, gbeta) = (bn.gamma.grad().clone(), bn.beta.grad().clone());
    let (x64, gm64, bt64, g64) = (x.cast::<f64>(), gamma.cast::<f64>(), beta.cast::<f64>(), g.cast::<f64>());
    let f = |x: &Tensor<f64>, gm: &Tensor<f64>, bt: &Tensor<f64>| {
        let mut wide = BatchNorm3d::<f64>::new("bn", 3);
        *wide.gamma.value_mut() = gm.clone();
        *wide.beta.value_mut() = bt.clone();
        weighted_sum(&g64, &wide.forward(x, true).expect("valid batch"))
    };
    Ok([
        check(&x, gx.data(), s, |t| f(t, &gm64, &bt64)),
        check(&gamma, ggamma.data(), s, |t| f(&x64, t, &bt64)),
        check(&beta, gbeta.data(), s, |t| f(&x64, &gm64, t)),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

fn relu_case(seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep every input at least 0.05 from the kink
    let mut x = normal([2, 2, 3, 3, 3], &mut rng, 1.0);
    x.data_mut().iter_mut().for_each(|v| *v = v.signum() * (v.abs() + 0.05));
    let y = relu(&x);
    let g = normal(y.shape(), &mut rng, 1.0);
    let gx = relu_backward(&y, &g);
    let g64 = g.cast::<f64>();
    Ok(check(&x, gx.data(), s, |t| weighted_sum(&g64, &relu(t))))
}

fn downsample_case(seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 2, 4, 4, 4];
    let n: usize = shape.iter().product();
    // distinct values spaced 0.01 apart, shuffled
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.01).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    let x = Tensor::from_vec(shape, vals)?;
    let (y, arg) = max_pool2(&x)?;
    let g = normal(y.shape(), &mut rng, 1.0);
    let gx = max_pool2_backward(shape, &arg, &g)?;
    let g64 = g.cast::<f64>();
    Ok(check(&x, gx.data(), s, |t| {
        weighted_sum(&g64, &max_pool2(t).expect("even dims").0)
    }))
}

fn loss_case(seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 2, 3, 3, 3];
    let probs = softmax_channels(&normal(shape, &mut rng, 1.5));
    let labels: Vec<u8> = (0..2 * 27).map(|_| rng.random_bool(0.3) as u8).collect();
    let target = one_hot2::<f32>(&labels, shape)?;
    let out = dice_ce_loss(&probs, &target)?;
    let t64 = target.cast::<f64>();
    Ok(check(&probs, out.grad.data(), s, |p| dice_ce_loss(p, &t64).expect("same shape").loss))
}

fn network_case(spec: &ArchitectureSpec, seed: u64, s: &SuiteSettings) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let x = normal([2, spec.in_channels(), 8, 8, 8], &mut rng, 1.0);
    let labels: Vec<u8> = (0..2 * 512).map(|_| rng.random_bool(0.3) as u8).collect();
    let target = one_hot2::<f32>(&labels, [2, 2, 8, 8, 8])?;
    let checks = network_gradcheck(spec, seed, &x, &target, s.probes / 4, s.eps)?;
    Ok(checks.iter().map(|(_, c)| c.max_rel_error).fold(0.0, f64::max))
}

/// Runs every op over `settings.seeds` seeds.
pub fn run_gradient_suite(settings: &SuiteSettings, on_result: &mut dyn FnMut(&OpResult)) -> Result<SuiteReport> {
    let pocket = ArchitectureSpec::Pocket(PocketUNetConfig::new(2, 2, 1));
    let double = ArchitectureSpec::Double(DoubleUNetConfig::symmetric(2, 2, 2, 1));
    let mut results = Vec::new();
    for &op in &OPS {
        for seed in 0..settings.seeds {
            let err = match op {
                "conv3d" => conv3d_case(seed, settings)?,
                "conv_transpose3d" => conv_transpose_case(seed, settings)?,
                "batchnorm3d" => batchnorm_case(seed, settings)?,
                "relu" => relu_case(seed, settings)?,
                "downsample" => downsample_case(seed, settings)?,
                "dice_ce_loss" => loss_case(seed, settings)?,
                "pocket_unet" => network_case(&pocket, seed, settings)?,
                _ => network_case(&double, seed, settings)?,
            };
            let r = OpResult {
                op,
                seed,
                max_rel_error: err,
                passed: err < settings.tolerance,
            };
            on_result(&r);
            results.push(r);
        }
    }
    Ok(SuiteReport {
        settings: *settings,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let s = SuiteSettings {
            seeds: 2,
            ..SuiteSettings::default()
        };
        let r = run_gradient_suite(&s, &mut |_| {}).unwrap();
        assert_eq!(r.results.len(), 2 * OPS.len());
        for (op, worst, ok) in r.worst_per_op() {
            assert!(ok, "{op}: {worst}");
        }
    }

    #[test]
    fn probes_stay_in_range() {
        assert_eq!(probes(4, 10), vec![0, 1, 2, 3]);
        assert!(probes(1000, 16).iter().all(|&i| i < 1000));
    }
}
