use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{ArchitectureSpec, Network};
use crate::error::{Error, Result};
use crate::nn::{dice_ce_loss, finite_difference_check_at, zero_grads, GradCheck, HasParams, Tensor};

/// Gradient check of the Dice+CE training loss of a whole network.
///
/// The analytic gradient comes from a single `f32` forward/backward in
/// train mode; the numeric one from central differences of an `f64` copy
/// holding the same (f32-rounded) weights. Every parameter tensor is probed
/// at up to `per_param` evenly spaced coordinates.
pub fn network_gradcheck(
    spec: &ArchitectureSpec,
    init_seed: u64,
    x: &Tensor<f32>,
    target: &Tensor<f32>,
    per_param: usize,
    eps: f64,
) -> Result<Vec<(String, GradCheck)>> {
    let mut net = Network::<f32>::build(spec, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
    let mut wide = Network::<f64>::build(spec, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
    for (dst, src) in wide.params_mut().into_iter().zip(net.params()) {
        *dst.value_mut() = src.value().cast();
    }

    zero_grads(&mut net);
    let probs = net.forward(x, true)?;
    let out = dice_ce_loss(&probs, target)?;
    net.backward(&out.grad)?;

    let (x64, t64) = (x.cast::<f64>(), target.cast::<f64>());
    let mut report = Vec::new();
    for (k, p) in net.params().into_iter().enumerate() {
        let base: Vec<f64> = p.value().data().iter().map(|&v| v as f64).collect();
        let analytic: Vec<f64> = p.grad().data().iter().map(|&v| v as f64).collect();
        let n = base.len();
        let count = per_param.clamp(1, n);
        let indices: Vec<usize> = (0..count).map(|i| i * n / count).collect();
        let mut failure = None;
        let check = finite_difference_check_at(
            |theta| {
                let mut params = wide.params_mut();
                params[k].value_mut().data_mut().copy_from_slice(theta);
                drop(params);
                match wide.forward(&x64, true).and_then(|p| dice_ce_loss(&p, &t64)) {
                    Ok(o) => o.loss,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            &base,
            &analytic,
            eps,
            &indices,
        );
        wide.params_mut()[k].value_mut().data_mut().copy_from_slice(&base);
        if let Some(e) = failure {
            return Err(e);
        }
        report.push((p.name.clone(), check));
    }
    if report.is_empty() {
        return Err(Error::InvalidConfig("network has no parameters".into()));
    }
    Ok(report)
}
