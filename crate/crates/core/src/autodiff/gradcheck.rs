//! Finite-difference gradient verification.
//!
//! Compares reverse-mode gradients against central differences. This is the
//! oracle the rest of the crate is validated against, so it deliberately
//! shares nothing with the backward pass: the numerical side only ever calls
//! the forward evaluation.

use thiserror::Error;

use super::graph::Graph;
use super::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("function is not deterministic: two forward passes differ ({first} vs {second})")]
    NonDeterministic { first: f64, second: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub tol: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

/// Relative error with a floor so finite-difference noise on near-zero
/// gradients does not dominate.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Check reverse-mode gradients of a scalar-valued `f` at `x` against
/// central differences with the given `step`, over every coordinate of `x`.
pub fn gradient_check(
    f: impl Fn(&mut Graph, &Tensor) -> Result<Tensor, TensorError>,
    x: &Tensor,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, GradCheckError> {
    let coords: Vec<usize> = (0..x.numel()).collect();
    gradient_check_coords(f, x, step, tol, &coords)
}

/// Same as [`gradient_check`] but restricted to the listed coordinates of
/// `x`; used when a parameter is too large to sweep exhaustively.
pub fn gradient_check_coords(
    f: impl Fn(&mut Graph, &Tensor) -> Result<Tensor, TensorError>,
    x: &Tensor,
    step: f64,
    tol: f64,
    coords: &[usize],
) -> Result<GradCheckReport, GradCheckError> {
    let eval = |values: &[f64]| -> Result<f64, GradCheckError> {
        let probe = Tensor::new(&x.shape(), values.to_vec())?;
        probe.set_requires_grad(x.requires_grad());
        let mut g = Graph::new();
        let out = f(&mut g, &probe)?;
        Ok(out.value())
    };

    let base = x.to_vec();
    let first = eval(&base)?;
    let second = eval(&base)?;
    if first.to_bits() != second.to_bits() {
        return Err(GradCheckError::NonDeterministic { first, second });
    }

    // Reverse-mode gradient at the base point.
    let probe = Tensor::param(&x.shape(), base.clone())?;
    let mut g = Graph::new();
    let out = f(&mut g, &probe)?;
    g.backward(&out)?;
    let ad_grad = probe.grad().expect("param has grad buffer");

    let mut max_rel_err = 0.0f64;
    let mut worst_coord = 0;
    for &i in coords {
        let mut plus = base.clone();
        plus[i] += step;
        let mut minus = base.clone();
        minus[i] -= step;
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
        let e = rel_err(ad_grad[i], fd);
        if e > max_rel_err {
            max_rel_err = e;
            worst_coord = i;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst_coord,
        tol,
        checked: coords.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        // Exactly representable values and a power-of-two step keep the
        // central difference itself exact.
        let x = Tensor::vector(vec![0.5, -1.25, 2.0]);
        let report = gradient_check(|g, x| g.sum(x), &x, 2f64.powi(-20), 1e-4).unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn softmax_cross_entropy_composite() {
        let x = Tensor::vector(vec![0.5, -0.25, 1.75, -1.0, 0.0]);
        let report = gradient_check(
            |g, x| {
                let w = Tensor::new(&[5], vec![0.2, -0.4, 0.9, 0.1, -1.3]).unwrap();
                let scaled = g.mul(x, &w)?;
                g.cross_entropy(&scaled, 2)
            },
            &x,
            1e-6,
            1e-5,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn wrong_gradient_fixture_fails() {
        // Forward computes sum(x ∘ x) but the second factor is rebuilt as a
        // constant each call, so the tracked gradient is x instead of 2x.
        let x = Tensor::vector(vec![0.7, -0.4, 1.1]);
        let report = gradient_check(
            |g, x| {
                let frozen = x.detached();
                let prod = g.mul(x, &frozen)?;
                g.sum(&prod)
            },
            &x,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn nondeterminism_detected() {
        use std::cell::Cell;
        let flip = Cell::new(0.0f64);
        let x = Tensor::vector(vec![1.0]);
        let err = gradient_check(
            |g, x| {
                flip.set(flip.get() + 1.0);
                let noise = Tensor::scalar(flip.get());
                let y = g.mul(x, &noise)?;
                g.sum(&y)
            },
            &x,
            1e-6,
            1e-4,
        );
        assert!(matches!(err, Err(GradCheckError::NonDeterministic { .. })));
    }
}
