//! Central finite differences for scalar functions of a few variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Step for first derivatives at coordinate value `x`.
pub fn gradient_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Step for second derivatives at coordinate value `x`.
pub fn hessian_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * x.abs().max(1.0)
}

fn checked<F>(f: &mut F, x: &DVector<f64>) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let v = f(x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation {
            point: x.iter().copied().collect(),
            value: v,
        })
    }
}

/// Central-difference gradient of a fallible function.
pub fn try_fd_gradient<F>(mut f: F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let s = x.len();
    let mut grad = DVector::zeros(s);
    let mut probe = x.clone();
    for j in 0..s {
        let h = gradient_step(x[j]);
        probe[j] = x[j] + h;
        let up = checked(&mut f, &probe)?;
        probe[j] = x[j] - h;
        let down = checked(&mut f, &probe)?;
        probe[j] = x[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Central-difference gradient.
pub fn fd_gradient<F>(mut f: F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    try_fd_gradient(|p| Ok(f(p)), x)
}

/// Central second differences, symmetrised.
pub fn try_fd_hessian<F>(mut f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let s = x.len();
    let steps: Vec<f64> = x.iter().map(|&v| hessian_step(v)).collect();
    let mut hess = DMatrix::zeros(s, s);
    let f0 = checked(&mut f, x)?;
    let mut probe = x.clone();
    for i in 0..s {
        let hi = steps[i];
        probe[i] = x[i] + hi;
        let up = checked(&mut f, &probe)?;
        probe[i] = x[i] - hi;
        let down = checked(&mut f, &probe)?;
        probe[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |di: f64, dj: f64| {
                probe[i] = x[i] + di;
                probe[j] = x[j] + dj;
                let v = checked(&mut f, &probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let pp = corner(hi, hj)?;
            let pm = corner(hi, -hj)?;
            let mp = corner(-hi, hj)?;
            let mm = corner(-hi, -hj)?;
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

pub fn fd_hessian<F>(mut f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    try_fd_hessian(|p| Ok(f(p)), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_examples() {
        let g = fd_gradient(|t| t[0] * t[0], &DVector::from_element(1, 3.0)).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-7);
        let g = fd_gradient(|t| t[0].sin(), &DVector::from_element(1, 0.7)).unwrap();
        assert!((g[0] - 0.7f64.cos()).abs() < 1e-7);
        assert!((g[0] - 0.764_842).abs() < 1e-6);
        let g = fd_gradient(|_| 4.2, &DVector::from_vec(vec![1.0, -3.0, 1e4])).unwrap();
        assert!(g.amax() < 1e-10);
    }

    #[test]
    fn hessian_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let h = fd_hessian(|t| 0.5 * (t.transpose() * &a * t)[(0, 0)], &DVector::from_vec(vec![0.3, -1.1])).unwrap();
        assert!((&h - &a).amax() < 1e-4);
        let h = fd_hessian(|t| (t[0] * t[1]).exp(), &DVector::zeros(2)).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((&h - want).amax() < 1e-4);
        assert_eq!(h[(0, 1)].to_bits(), h[(1, 0)].to_bits());
    }

    #[test]
    fn nonfinite_stencil_reports_point() {
        let err = fd_gradient(|t| t[0].ln(), &DVector::from_element(1, 0.0)).unwrap_err();
        match err {
            Error::NonFiniteEvaluation { point, .. } => assert_eq!(point.len(), 1),
            other => panic!("{other:?}"),
        }
        assert!(fd_hessian(|t| (t[0] - 1.0).sqrt(), &DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn steps_scale_with_magnitude() {
        assert_eq!(gradient_step(0.5), f64::EPSILON.cbrt());
        assert_eq!(gradient_step(-20.0), 20.0 * f64::EPSILON.cbrt());
        assert_eq!(hessian_step(2.0), 2.0 * f64::EPSILON.powf(0.25));
    }
}
