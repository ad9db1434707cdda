use nalgebra::{DMatrix, DVector};

use super::{FitFlag, FitResult};
use crate::error::{Error, Result};

/// One fit parameter: name, starting value, bounds and whether it is held.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn free(name: &str, init: f64) -> Self {
        Self {
            name: name.to_string(),
            init,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            fixed: false,
        }
    }

    pub fn positive(name: &str, init: f64) -> Self {
        Self::bounded(name, init, 0.0, f64::INFINITY)
    }

    pub fn bounded(name: &str, init: f64, lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            ..Self::free(name, init)
        }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        Self {
            fixed: true,
            ..Self::free(name, value)
        }
    }

    /// Internal (unbounded) coordinate for external value `p`.
    fn to_internal(&self, p: f64) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => {
                let s = (p - self.lower) / (self.upper - self.lower);
                (s / (1.0 - s)).ln()
            }
            (true, false) => (p - self.lower).ln(),
            (false, true) => (self.upper - p).ln(),
            (false, false) => p,
        }
    }

    fn to_external(&self, u: f64) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => self.lower + (self.upper - self.lower) / (1.0 + (-u).exp()),
            (true, false) => self.lower + u.exp(),
            (false, true) => self.upper - u.exp(),
            (false, false) => u,
        }
    }

    /// Starting value pulled strictly inside the bounds so the transforms
    /// stay finite.
    fn interior_init(&self) -> f64 {
        let width = self.upper - self.lower;
        let margin = if width.is_finite() {
            1e-9 * width
        } else {
            1e-12 * self.init.abs().max(1.0)
        };
        let mut p = self.init;
        if self.lower.is_finite() && p <= self.lower {
            p = self.lower + margin;
        }
        if self.upper.is_finite() && p >= self.upper {
            p = self.upper - margin;
        }
        p
    }
}

/// Controls for [`least_squares`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Relative cost-change tolerance.
    pub ftol: f64,
    /// Relative step tolerance (internal coordinates).
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

/// Observations for a curve fit. `sigma` are per-point 1σ errors; `None`
/// means unit weights.
#[derive(Debug, Clone, Copy)]
pub struct Data<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: Option<&'a [f64]>,
}

impl<'a> Data<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        Self { x, y, sigma: None }
    }

    pub fn with_sigma(mut self, sigma: &'a [f64]) -> Self {
        self.sigma = Some(sigma);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::invalid("x and y lengths differ"));
        }
        if let Some(s) = self.sigma {
            if s.len() != self.y.len() {
                return Err(Error::invalid("sigma length differs from data"));
            }
            if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid("sigmas must be positive and finite"));
            }
        }
        if self.x.iter().chain(self.y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contain non-finite values"));
        }
        Ok(())
    }
}

const STEP: f64 = 1e-6;
const MAX_LAMBDA: f64 = 1e16;
/// Cost below this fraction of Σ(y/σ)² counts as an exact fit.
const COST_FLOOR: f64 = 1e-26;
/// Smallest eigenvalue of the scaled normal matrix tolerated before the fit
/// is declared degenerate.
const MIN_SCALED_EIGEN: f64 = 1e-13;

struct Problem<'a, F> {
    model: F,
    data: Data<'a>,
    specs: &'a [ParamSpec],
    free: Vec<usize>,
    base: Vec<f64>,
}

impl<F: Fn(&[f64], f64) -> f64> Problem<'_, F> {
    fn external(&self, u: &[f64]) -> Vec<f64> {
        let mut p = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = self.specs[i].to_external(u[k]);
        }
        p
    }

    fn residuals_at(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.data.y.len(),
            self.data.x.iter().zip(self.data.y).enumerate().map(|(i, (&x, &y))| {
                let w = self.data.sigma.map_or(1.0, |s| 1.0 / s[i]);
                ((self.model)(p, x) - y) * w
            }),
        )
    }

    fn cost(r: &DVector<f64>) -> f64 {
        let c = 0.5 * r.norm_squared();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    /// Central-difference Jacobian with respect to the free coordinates in
    /// `coords`, mapped to external parameters by `map`. Transformed
    /// coordinates are already logarithmic and get an absolute step, which
    /// keeps the iteration invariant under rescaling of the data.
    fn jacobian(&self, coords: &[f64], relative: &[bool], map: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
        let n = self.data.y.len();
        let mut j = DMatrix::zeros(n, coords.len());
        let mut c = coords.to_vec();
        for k in 0..coords.len() {
            let h = if relative[k] {
                STEP * coords[k].abs().max(1.0)
            } else {
                STEP
            };
            c[k] = coords[k] + h;
            let plus = self.residuals_at(&map(&c));
            c[k] = coords[k] - h;
            let minus = self.residuals_at(&map(&c));
            let span = (coords[k] + h) - (coords[k] - h);
            c[k] = coords[k];
            j.set_column(k, &((plus - minus) / span));
        }
        j
    }
}

/// Damped Gauss–Newton (Levenberg–Marquardt) fit of `model(params, x)` to
/// `data`.
///
/// Bounded parameters are optimized through a logistic (two finite bounds)
/// or exponential (one bound) reparameterization; the covariance is then
/// evaluated in the original parameters as `(JᵀJ)⁻¹·χ²_red`. Hitting the
/// iteration cap yields a result with `converged == false`.
pub fn least_squares<F>(model: F, data: Data<'_>, params: &[ParamSpec], options: &LsqOptions) -> Result<FitResult>
where
    F: Fn(&[f64], f64) -> f64,
{
    data.validate()?;
    let mut names = std::collections::BTreeSet::new();
    for s in params {
        if !names.insert(s.name.as_str()) {
            return Err(Error::invalid(format!("duplicate parameter `{}`", s.name)));
        }
        if !s.init.is_finite() || s.lower.is_nan() || s.upper.is_nan() || s.lower >= s.upper {
            return Err(Error::invalid(format!("parameter `{}` has invalid init or bounds", s.name)));
        }
        if !s.fixed && (s.init < s.lower || s.init > s.upper) {
            return Err(Error::invalid(format!(
                "parameter `{}` init {} outside [{}, {}]",
                s.name, s.init, s.lower, s.upper
            )));
        }
    }
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].fixed).collect();
    let n = data.y.len();
    if free.is_empty() {
        return Err(Error::invalid("no free parameters"));
    }
    if n <= free.len() {
        return Err(Error::DegenerateFit(format!(
            "{n} data points for {} free parameters",
            free.len()
        )));
    }
    let problem = Problem {
        model,
        data,
        specs: params,
        free,
        base: params.iter().map(|s| s.init).collect(),
    };
    let scale: f64 = data
        .y
        .iter()
        .enumerate()
        .map(|(i, y)| (y / data.sigma.map_or(1.0, |s| s[i])).powi(2))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let floor = COST_FLOOR * scale;

    let mut u: Vec<f64> = problem
        .free
        .iter()
        .map(|&i| params[i].to_internal(params[i].interior_init()))
        .collect();
    let mut r = problem.residuals_at(&problem.external(&u));
    let mut cost = Problem::<F>::cost(&r);
    if !cost.is_finite() {
        return Err(Error::invalid("model is not finite at the initial parameters"));
    }
    let unbounded: Vec<bool> = problem
        .free
        .iter()
        .map(|&i| !params[i].lower.is_finite() && !params[i].upper.is_finite())
        .collect();
    let mut lambda = options.initial_lambda;
    let mut iterations = 0;
    let mut converged = cost <= floor;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let j = problem.jacobian(&u, &unbounded, |c| problem.external(c));
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let max_diag = a.diagonal().max();
        let mut accepted = None;
        while lambda <= MAX_LAMBDA {
            let mut damped = a.clone();
            for k in 0..u.len() {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let r_trial = problem.residuals_at(&problem.external(&trial));
                let c_trial = Problem::<F>::cost(&r_trial);
                if c_trial < cost {
                    accepted = Some((trial, r_trial, c_trial, step));
                    lambda = (lambda / 10.0).max(1e-15);
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, r_trial, c_trial, step)) = accepted else {
            // No downhill step exists at any damping: a stationary point.
            converged = true;
            break;
        };
        let rel_cost = (cost - c_trial) / cost;
        let step_norm = step.norm();
        let u_norm = DVector::from_column_slice(&u).norm();
        u = trial;
        r = r_trial;
        cost = c_trial;
        if cost <= floor || rel_cost < options.ftol || step_norm <= options.xtol * (u_norm + options.xtol) {
            converged = true;
        }
    }

    let p = problem.external(&u);
    // Covariance in the original parameters.
    let free_p: Vec<f64> = problem.free.iter().map(|&i| p[i]).collect();
    let map_ext = |c: &[f64]| {
        let mut q = p.clone();
        for (k, &i) in problem.free.iter().enumerate() {
            q[i] = c[k];
        }
        q
    };
    let j = problem.jacobian(&free_p, &vec![true; free_p.len()], map_ext);
    let a = j.transpose() * &j;
    let m = problem.free.len();
    let d: Vec<f64> = (0..m).map(|k| a[(k, k)].sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateFit(
            "a parameter has no influence on the model".to_string(),
        ));
    }
    let scaled = DMatrix::from_fn(m, m, |i, k| a[(i, k)] / (d[i] * d[k]));
    let min_eigen = scaled.clone().symmetric_eigenvalues().min();
    if !(min_eigen > MIN_SCALED_EIGEN) {
        return Err(Error::DegenerateFit(format!(
            "normal matrix is singular (scaled eigenvalue {min_eigen:.3e})"
        )));
    }
    let inv_scaled = scaled
        .cholesky()
        .ok_or_else(|| Error::DegenerateFit("normal matrix is not positive definite".to_string()))?
        .inverse();
    let dof = (n - m) as f64;
    let chi2_reduced = 2.0 * cost / dof;
    let np = params.len();
    let mut covariance = vec![vec![0.0; np]; np];
    for (a_i, &i) in problem.free.iter().enumerate() {
        for (b_i, &k) in problem.free.iter().enumerate() {
            covariance[i][k] = inv_scaled[(a_i, b_i)] / (d[a_i] * d[b_i]) * chi2_reduced;
        }
    }
    let sigmas = (0..np).map(|i| covariance[i][i].max(0.0).sqrt()).collect();
    let mut flags = Vec::new();
    if !converged {
        flags.push(FitFlag::NotConverged);
    }
    Ok(FitResult {
        model: String::new(),
        names: params.iter().map(|s| s.name.clone()).collect(),
        values: p,
        sigmas,
        covariance,
        chi2_reduced,
        iterations,
        converged,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(p: &[f64], x: f64) -> f64 {
        p[0] + p[1] * x
    }

    #[test]
    fn linear_fit_matches_closed_form() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| 1.5 + 0.3 * x + if (x as i32) % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let fit = least_squares(
            line,
            Data::new(&x, &y),
            &[ParamSpec::free("a", 0.0), ParamSpec::free("b", 1.0)],
            &LsqOptions::default(),
        )
        .unwrap();
        // Ordinary least squares oracle.
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let a = (sy - b * sx) / n;
        assert!((fit.value("a").unwrap() - a).abs() < 1e-9);
        assert!((fit.value("b").unwrap() - b).abs() < 1e-10);
        assert!(fit.converged);
        // Standard error of the slope.
        let s2 = 2.0 * y.iter().zip(&x).map(|(y, x)| (y - a - b * x).powi(2)).sum::<f64>() / (n - 2.0) / 2.0;
        let se_b = (s2 / (sxx - sx * sx / n)).sqrt();
        assert!((fit.sigma("b").unwrap() - se_b).abs() / se_b < 1e-5);
    }

    #[test]
    fn exact_init_needs_no_iterations() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 2.0 - 0.5 * x).collect();
        let fit = least_squares(
            line,
            Data::new(&x, &y),
            &[ParamSpec::free("a", 2.0), ParamSpec::free("b", -0.5)],
            &LsqOptions::default(),
        )
        .unwrap();
        assert_eq!(fit.iterations, 0);
        assert!(fit.converged);
        assert_eq!(fit.chi2_reduced, 0.0);
    }

    #[test]
    fn too_few_points_is_degenerate() {
        let fit = least_squares(
            line,
            Data::new(&[0.0, 1.0], &[1.0, 2.0]),
            &[ParamSpec::free("a", 0.0), ParamSpec::free("b", 0.0)],
            &LsqOptions::default(),
        );
        assert!(matches!(fit, Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn redundant_parameters_are_degenerate() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 1.0 + x).collect();
        let fit = least_squares(
            |p: &[f64], x: f64| p[0] + p[1] + p[2] * x,
            Data::new(&x, &y),
            &[ParamSpec::free("a", 0.0), ParamSpec::free("b", 0.0), ParamSpec::free("c", 0.0)],
            &LsqOptions::default(),
        );
        assert!(matches!(fit, Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|&x| 3.0 * (-x / 2.0).exp()).collect();
        let fit = least_squares(
            |p: &[f64], x: f64| p[0] * (-x / p[1]).exp(),
            Data::new(&x, &y),
            &[ParamSpec::positive("a", 1.0), ParamSpec::positive("tau", 7.0)],
            &LsqOptions {
                max_iterations: 1,
                ..LsqOptions::default()
            },
        )
        .unwrap();
        assert!(!fit.converged);
        assert!(fit.flags.contains(&FitFlag::NotConverged));
    }

    #[test]
    fn fixed_parameters_are_held() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 1.0 + 2.0 * x).collect();
        let fit = least_squares(
            line,
            Data::new(&x, &y),
            &[ParamSpec::fixed("a", 0.0), ParamSpec::free("b", 1.0)],
            &LsqOptions::default(),
        )
        .unwrap();
        assert_eq!(fit.value("a").unwrap(), 0.0);
        assert_eq!(fit.sigma("a").unwrap(), 0.0);
        assert!(fit.value("b").unwrap() > 2.0);
    }

    #[test]
    fn init_outside_bounds_rejected() {
        let r = least_squares(
            line,
            Data::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]),
            &[ParamSpec::bounded("a", 2.0, 0.0, 1.0), ParamSpec::free("b", 1.0)],
            &LsqOptions::default(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn transforms_round_trip() {
        for spec in [
            ParamSpec::bounded("c", 0.3, 0.0, 1.0),
            ParamSpec::positive("t", 4.0),
            ParamSpec::bounded("u", -2.0, f64::NEG_INFINITY, 1.0),
            ParamSpec::free("f", -7.5),
        ] {
            let u = spec.to_internal(spec.init);
            assert!((spec.to_external(u) - spec.init).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cost_never_increases(a in 0.5f64..5.0, tau in 0.5f64..10.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..60).map(|i| i as f64 * 0.3).collect();
            let y: Vec<f64> = x.iter().map(|&x| a * (-x / tau).exp() + 0.01 * (rng.random::<f64>() - 0.5)).collect();
            let model = |p: &[f64], x: f64| p[0] * (-x / p[1]).exp();
            let specs = [ParamSpec::positive("a", 1.0), ParamSpec::positive("tau", 3.0)];
            let initial: f64 = x.iter().zip(&y).map(|(&x, &y)| (model(&[1.0, 3.0], x) - y).powi(2)).sum();
            let fit = least_squares(model, Data::new(&x, &y), &specs, &LsqOptions::default()).unwrap();
            let fin: f64 = x.iter().zip(&y).map(|(&x, &y)| (model(&fit.values, x) - y).powi(2)).sum();
            prop_assert!(fin <= initial);
            prop_assert!(fit.sigmas.iter().all(|&s| s >= 0.0));
        }
    }
}
