use rand::seq::index::sample;

use crate::branch::with_branch_recording;
use crate::{no_grad, seeded_rng, Tensor, TensorError};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Initial central-difference step.
    pub h: f64,
    /// Smallest step tried when a perturbation crosses a kink.
    pub min_h: f64,
    /// Upper bound on checked coordinates per input; sampled when exceeded.
    pub max_coords: usize,
    pub seed: u64,
    /// Smallest denominator in the relative error; gradients below it are
    /// compared absolutely. Raise it when `h` is small enough for roundoff in
    /// the difference quotient (about `eps * |f| / h`) to approach it.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            min_h: 1e-7,
            max_coords: usize::MAX,
            seed: 0,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates where every step size changed a piecewise branch.
    pub skipped: usize,
    /// `(input, coordinate, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    rel_err_floor(a, n, 1e-8)
}

fn rel_err_floor(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares analytic gradients of the scalar `f` with central differences.
///
/// Piecewise ops (relu, abs_diff, maxpool) record their branch decisions;
/// when a perturbed evaluation takes a different branch than the base point
/// the step is shrunk tenfold until `min_h`, after which the coordinate is
/// skipped.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>, TensorError>,
{
    for x in inputs {
        x.zero_grad();
    }
    let (loss, base_sig) = with_branch_recording(|| f(inputs));
    loss?.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| x.grad().unwrap_or_else(|| vec![0.0; x.numel()]))
        .collect();

    let eval = |x: &Tensor<f64>, i: usize, v: f64| -> Result<(f64, u64), TensorError> {
        x.update_data(|d| d[i] = v);
        let (r, sig) = with_branch_recording(|| no_grad(|| f(inputs)));
        Ok((r?.item(), sig))
    };

    let mut rng = seeded_rng(opts.seed);
    let mut report = GradCheckReport::default();
    for (k, x) in inputs.iter().enumerate() {
        let n = x.numel();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_coords).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let x0 = x.data()[i];
            let mut h = opts.h;
            let mut numeric = None;
            while h >= opts.min_h {
                let (fp, sp) = eval(x, i, x0 + h)?;
                let (fm, sm) = eval(x, i, x0 - h)?;
                if sp == base_sig && sm == base_sig {
                    numeric = Some((fp - fm) / (2.0 * h));
                    break;
                }
                h /= 10.0;
            }
            x.update_data(|d| d[i] = x0);
            let Some(numeric) = numeric else {
                report.skipped += 1;
                continue;
            };
            let a = analytic[k][i];
            let e = rel_err_floor(a, numeric, opts.floor);
            report.checked += 1;
            if report.worst.is_none() || e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = Some((k, i, a, numeric));
            }
        }
    }
    Ok(report)
}

/// Single-input convenience wrapper checking every coordinate.
pub fn grad_check_fn<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64, TensorError>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>, TensorError>,
{
    let opts = GradCheckOptions {
        h,
        ..GradCheckOptions::default()
    };
    Ok(grad_check(|xs| f(&xs[0]), std::slice::from_ref(x), opts)?.max_rel_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{mul, relu, sum};

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::leaf(&[5], vec![-2.0, -0.5, 0.0, 1.5, 3.0]);
        let e = grad_check_fn(|x| Ok(sum(&mul(x, x)?)), &x, 1e-3).unwrap();
        assert!(e < 1e-8, "{e}");
        assert_eq!(x.to_vec(), vec![-2.0, -0.5, 0.0, 1.5, 3.0]);
    }

    #[test]
    fn linear_sum_is_exact() {
        let x = Tensor::leaf(&[4], vec![0.25, 0.5, 1.0, 2.0]);
        let opts = GradCheckOptions {
            h: 0.25,
            ..GradCheckOptions::default()
        };
        let r = grad_check(|xs| Ok(sum(&xs[0])), std::slice::from_ref(&x), opts).unwrap();
        assert_eq!(r.max_rel_err, 0.0);
        assert_eq!(r.checked, 4);
        let (_, _, a, n) = r.worst.unwrap();
        assert_eq!((a, n), (1.0, 1.0));
    }

    #[test]
    fn relu_kinks_shrink_or_skip() {
        let x = Tensor::leaf(&[3], vec![0.0005, 0.0, -2.0]);
        let r = grad_check(|xs| Ok(sum(&relu(&xs[0]))), std::slice::from_ref(&x), GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_err < 1e-12, "{r:?}");
        assert_eq!(r.checked, 2);
        assert_eq!(r.skipped, 1);
    }

    #[test]
    fn sampling_caps_coordinates() {
        let x = Tensor::leaf(&[100], (0..100).map(f64::from).collect());
        let opts = GradCheckOptions {
            max_coords: 7,
            ..GradCheckOptions::default()
        };
        let r = grad_check(|xs| Ok(sum(&mul(&xs[0], &xs[0])?)), std::slice::from_ref(&x), opts).unwrap();
        assert_eq!(r.checked, 7);
    }
}
