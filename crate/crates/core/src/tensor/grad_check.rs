use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares tape gradients against central finite differences.
///
/// `f` builds a scalar objective from leaves registered for `inputs`.
/// Every input coordinate is perturbed by `+eps` and `-eps` on fresh
/// tapes; the returned value is the maximum relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over all
/// coordinates. `eps` must lie in `[1e-7, 1e-4]`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Usage(format!(
            "grad_check eps {eps} outside supported range [1e-7, 1e-4]"
        )));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    if tape.value(root)?.numel() != 1 {
        return Err(Error::Usage(
            "grad_check requires a scalar objective".into(),
        ));
    }
    let grads = tape.backward(root)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.get(v).cloned())
        .collect::<Result<_>>()?;

    let eval = |shifted: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = shifted.iter().map(|x| t.leaf(x.clone())).collect();
        let r = f(&mut t, &vs)?;
        Ok(t.value(r)?.data()[0])
    };

    let mut max_err: f64 = 0.0;
    let mut shifted: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let original = shifted[i].data()[j];
            shifted[i].data_mut()[j] = original + eps;
            let plus = eval(&shifted)?;
            shifted[i].data_mut()[j] = original - eps;
            let minus = eval(&shifted)?;
            shifted[i].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i].data()[j];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_err = max_err.max((a - numeric).abs() / denom);
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunRng;

    fn random_tensor(shape: &[usize], rng: &mut RunRng) -> Tensor {
        let data = (0..shape.iter().product()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn eps_range_is_enforced() {
        let x = Tensor::scalar(1.0);
        let f = |t: &mut Tape, v: &[Var]| t.sum_all(v[0]);
        assert!(matches!(grad_check(f, &[x.clone()], 1e-3), Err(Error::Usage(_))));
        assert!(matches!(grad_check(f, &[x.clone()], 1e-8), Err(Error::Usage(_))));
        assert!(grad_check(f, &[x], 1e-5).is_ok());
    }

    #[test]
    fn non_scalar_objective_is_rejected() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let f = |t: &mut Tape, v: &[Var]| t.relu(v[0]);
        assert!(matches!(grad_check(f, &[x], 1e-5), Err(Error::Usage(_))));
    }

    #[test]
    fn matmul_chain_checks_out() {
        let mut rng = RunRng::from_seed(21);
        let a = random_tensor(&[3, 4], &mut rng);
        let b = random_tensor(&[4, 2], &mut rng);
        let err = grad_check(
            |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let q = t.tanh(p)?;
                t.mean_all(q)
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn softmax_log_objective_checks_out() {
        let mut rng = RunRng::from_seed(22);
        let x = random_tensor(&[2, 5], &mut rng);
        let err = grad_check(
            |t, v| {
                let p = t.softmax(v[0])?;
                let shifted = t.add_scalar(p, 1e-9)?;
                let lp = t.log(shifted)?;
                t.mean_all(lp)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn conv_pool_objective_checks_out() {
        let mut rng = RunRng::from_seed(23);
        let x = random_tensor(&[2, 6, 2], &mut rng);
        let w = random_tensor(&[3, 2, 3], &mut rng);
        let b = random_tensor(&[3], &mut rng);
        let err = grad_check(
            |t, v| {
                let c = t.conv1d(v[0], v[1], v[2], 1, 1)?;
                let a = t.sigmoid(c)?;
                let p = t.max_pool1d(a, 2, 2)?;
                let g = t.gap(p)?;
                t.mean_all(g)
            },
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn broadcast_ops_check_out() {
        let mut rng = RunRng::from_seed(24);
        let a = random_tensor(&[3, 4], &mut rng);
        let row = random_tensor(&[4], &mut rng);
        let s = random_tensor(&[1], &mut rng);
        let err = grad_check(
            |t, v| {
                let x = t.add(v[0], v[1])?;
                let y = t.mul(x, v[2])?;
                let z = t.sub(y, v[1])?;
                let e = t.exp(z)?;
                t.mean_all(e)
            },
            &[a, row, s],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }
}
