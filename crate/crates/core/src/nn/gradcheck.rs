/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` with central differences of `f` at every coordinate of `x`.
pub fn finite_difference_check<F>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    finite_difference_check_at(f, x, analytic, eps, &all)
}

/// As [`finite_difference_check`], restricted to `indices`.
pub fn finite_difference_check_at<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    indices: &[usize],
) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let mut probe = x.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > worst.max_rel_error || err.is_nan() {
            worst = GradCheck {
                max_rel_error: if err.is_nan() { f64::INFINITY } else { err },
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = [0.5, -2.0, 3.25, 7.0];
        let x = [1.0, 2.0, -1.0, 0.1];
        let r = finite_difference_check(|v| v.iter().zip(&c).map(|(a, b)| a * b).sum(), &x, &c, 1e-3);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn quadratic_within_truncation_error() {
        let x = [0.3, -1.7, 2.2, 0.9, -0.05];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = finite_difference_check(|v| v.iter().map(|a| a * a).sum(), &x, &g, 1e-3);
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let r = finite_difference_check(|v| v[0] * v[0], &[1.0], &[3.0], 1e-4);
        assert!(!r.passes(1e-3));
        assert_eq!(r.worst_index, 0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
