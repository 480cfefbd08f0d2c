//! The quadratic MAP objectives, evaluated term by term, with analytic
//! gradients. These are written from the objectives themselves rather than
//! from the assembled normal equations so they can serve as an independent
//! check on the solvers.

use nalgebra::{DMatrix, DVector};

use crate::graph::DirectedInterpGraph;

/// `‖y − x‖² + μ xᵀLx`.
pub fn denoise_value(y: &DVector<f64>, l: &DMatrix<f64>, mu: f64, x: &DVector<f64>) -> f64 {
    (y - x).norm_squared() + mu * x.dot(&(l * x))
}

/// `2(x − y) + μ(L + Lᵀ)x`.
pub fn denoise_gradient(y: &DVector<f64>, l: &DMatrix<f64>, mu: f64, x: &DVector<f64>) -> DVector<f64> {
    (x - y) * 2.0 + (l * x + l.tr_mul(x)) * mu
}

/// Interpolation fidelity plus shift variation on the original pixels,
/// with optional GLR terms on the original (`μ, L`) and new (`κ, L̄`) pixels.
#[derive(Debug, Clone, Copy)]
pub struct MixedObjective<'a> {
    pub y: &'a DVector<f64>,
    pub graph: &'a DirectedInterpGraph,
    pub gamma: f64,
    pub original_prior: Option<(f64, &'a DMatrix<f64>)>,
    pub new_prior: Option<(f64, &'a DMatrix<f64>)>,
}

impl<'a> MixedObjective<'a> {
    /// `‖y − Hx‖² + γ‖H(x − Ax)‖²`.
    pub fn interpolation(y: &'a DVector<f64>, graph: &'a DirectedInterpGraph, gamma: f64) -> Self {
        Self { y, graph, gamma, original_prior: None, new_prior: None }
    }

    /// Adds `μ (Hx)ᵀ L (Hx)`.
    pub fn with_original_prior(mut self, mu: f64, l: &'a DMatrix<f64>) -> Self {
        self.original_prior = Some((mu, l));
        self
    }

    /// Adds `κ (Gx)ᵀ L̄ (Gx)`.
    pub fn with_new_prior(mut self, kappa: f64, lbar: &'a DMatrix<f64>) -> Self {
        self.new_prior = Some((kappa, lbar));
        self
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let m = self.graph.original_count();
        let n = self.graph.new_count();
        assert_eq!(x.len(), m + n, "signal length");
        (x.rows(0, m).into_owned(), x.rows(m, n).into_owned())
    }

    /// `H(x − Ax) = x_o − A_{M,N} x_n`.
    fn shift_residual(&self, xo: &DVector<f64>, xn: &DVector<f64>) -> DVector<f64> {
        xo - self.graph.a_mn() * xn
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let (xo, xn) = self.split(x);
        let mut f = (self.y - &xo).norm_squared() + self.gamma * self.shift_residual(&xo, &xn).norm_squared();
        if let Some((mu, l)) = self.original_prior {
            f += mu * xo.dot(&(l * &xo));
        }
        if let Some((kappa, lbar)) = self.new_prior {
            f += kappa * xn.dot(&(lbar * &xn));
        }
        f
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (xo, xn) = self.split(x);
        let s = self.shift_residual(&xo, &xn);
        let mut go = (&xo - self.y) * 2.0 + &s * (2.0 * self.gamma);
        let mut gn = self.graph.a_mn().tr_mul(&s) * (-2.0 * self.gamma);
        if let Some((mu, l)) = self.original_prior {
            go += (l * &xo + l.tr_mul(&xo)) * mu;
        }
        if let Some((kappa, lbar)) = self.new_prior {
            gn += (lbar * &xn + lbar.tr_mul(&xn)) * kappa;
        }
        let mut g = DVector::zeros(x.len());
        g.rows_mut(0, go.len()).copy_from(&go);
        g.rows_mut(go.len(), gn.len()).copy_from(&gn);
        g
    }
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}
