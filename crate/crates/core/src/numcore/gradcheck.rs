//! Central finite-difference verification of analytic gradients.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default central-difference step.
pub const STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic[i]` against central differences of the scalar
/// function `f` with respect to every element of `inputs[i]`.
pub fn grad_check<F>(inputs: &[Tensor], analytic: &[Tensor], f: F) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    grad_check_with_step(inputs, analytic, STEP, f)
}

pub fn grad_check_with_step<F>(
    inputs: &[Tensor],
    analytic: &[Tensor],
    step: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if inputs.len() != analytic.len() {
        return Err(Error::dim(format!(
            "{} inputs but {} gradients",
            inputs.len(),
            analytic.len()
        )));
    }
    for (x, g) in inputs.iter().zip(analytic) {
        x.same_shape(g)?;
        g.check_finite("analytic gradient")?;
    }
    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for i in 0..work.len() {
        for j in 0..work[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let up = f(&work)?;
            work[i].data_mut()[j] = orig - step;
            let down = f(&work)?;
            work[i].data_mut()[j] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing input {i} element {j}"
                )));
            }
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic[i].data()[j], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}

/// Standard-normal tensor, used to build random test inputs and loss
/// projections.
pub fn random_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.sample(StandardNormal);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_map_is_exact() {
        let a = Tensor::new(&[3], vec![1.5, -2.0, 0.25]).unwrap();
        let x = Tensor::new(&[3], vec![0.3, 0.1, -0.7]).unwrap();
        let r = grad_check(&[x], std::slice::from_ref(&a), |p| Ok(p[0].dot(&a))).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn tanh_composite() {
        let x = Tensor::new(&[4], vec![0.3, -1.2, 2.0, 0.05]).unwrap();
        // d/dx sum(tanh(2x)^2) = 4 tanh(2x) (1 - tanh(2x)^2)
        let g = x.map(|v| {
            let th = (2.0 * v).tanh();
            4.0 * th * (1.0 - th * th)
        });
        let r = grad_check(&[x], &[g], |p| {
            Ok(p[0].data().iter().map(|v| (2.0 * v).tanh().powi(2)).sum())
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let g = Tensor::new(&[2], vec![1.0, 1.0]).unwrap();
        let r = grad_check(&[x], &[g], |p| Ok(p[0].data().iter().map(|v| v * v).sum())).unwrap();
        assert!(r.max_rel_error > 0.1);
        assert!(r.worst.is_some());
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let x = Tensor::new(&[1], vec![0.0]).unwrap();
        let g = Tensor::new(&[1], vec![0.0]).unwrap();
        let r = grad_check(&[x], &[g], |p| Ok(1.0 / p[0].data()[0].abs().min(0.0)));
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
