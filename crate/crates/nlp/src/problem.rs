/// A smooth nonlinear program
///
/// ```text
/// min  f(x)
/// s.t. c(x)  = 0        (multipliers lambda)
///      h(x) <= 0        (multipliers nu >= 0)
///      l <= x <= u      (multipliers z_l, z_u >= 0)
/// ```
///
/// Sparse derivative callbacks report values in the order fixed by the
/// matching `*_pattern` method. Duplicate `(row, col)` entries are summed.
/// The Hessian pattern lists the lower triangle only (`row >= col`).
pub trait NlpProblem {
    fn num_vars(&self) -> usize;

    fn num_eq(&self) -> usize;

    fn num_ineq(&self) -> usize {
        0
    }

    /// Variable bounds. Use `f64::NEG_INFINITY` / `f64::INFINITY` for
    /// absent bounds.
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]);

    fn initial_point(&self, x: &mut [f64]);

    fn objective(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    fn eq_values(&self, x: &[f64], out: &mut [f64]);

    fn ineq_values(&self, _x: &[f64], _out: &mut [f64]) {}

    fn eq_jacobian_pattern(&self) -> Vec<(usize, usize)>;

    fn eq_jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    fn ineq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }

    fn ineq_jacobian_values(&self, _x: &[f64], _vals: &mut [f64]) {}

    fn hessian_pattern(&self) -> Vec<(usize, usize)>;

    /// Lower triangle of `obj_factor * ∇²f + Σ lambda_i ∇²c_i + Σ nu_j ∇²h_j`.
    fn hessian_values(
        &self,
        x: &[f64],
        obj_factor: f64,
        lambda: &[f64],
        nu: &[f64],
        vals: &mut [f64],
    );
}
