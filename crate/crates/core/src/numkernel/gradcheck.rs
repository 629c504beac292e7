use super::Matrix;

/// Analytic and central-difference derivative for one entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl EntryCheck {
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(1e-8)
    }

    pub fn absolute_error(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

/// Per-entry central differences of `f` around `point`.
///
/// `f` returns the scalar value and its analytic gradient at a point.
pub fn finite_diff_entries<F>(f: F, point: &Matrix, eps: f64) -> Vec<EntryCheck>
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let (_, analytic) = f(point);
    assert!(analytic.same_shape(point), "analytic gradient shape differs from point");
    let mut probe = point.clone();
    (0..point.len())
        .map(|i| {
            let orig = point.data()[i];
            probe.data_mut()[i] = orig + eps;
            let plus = f(&probe).0;
            probe.data_mut()[i] = orig - eps;
            let minus = f(&probe).0;
            probe.data_mut()[i] = orig;
            EntryCheck { index: i, analytic: analytic.data()[i], numeric: (plus - minus) / (2.0 * eps) }
        })
        .collect()
}

/// Max over entries of `|analytic − numeric| / max(|analytic|, 1e-8)`,
/// with `numeric` the central difference at step `eps`.
pub fn finite_diff_check<F>(f: F, point: &Matrix, eps: f64) -> f64
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    finite_diff_entries(f, point, eps).iter().map(EntryCheck::relative_error).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{attention, attention_backward};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_squares() {
        let f = |m: &Matrix| (m.data().iter().map(|v| v * v).sum(), m.scale(2.0));
        let err = finite_diff_check(f, &Matrix::from_rows(&[[1.0, 2.0]]), 1e-4);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function() {
        let f = |m: &Matrix| (3.5, Matrix::zeros(m.rows(), m.cols()));
        assert_eq!(finite_diff_check(f, &Matrix::from_rows(&[[1.0, -4.0]]), 1e-4), 0.0);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |m: &Matrix| (m.data().iter().map(|v| v * v).sum(), m.scale(2.1));
        assert!(finite_diff_check(f, &Matrix::from_rows(&[[1.0, 2.0]]), 1e-4) > 0.04);
    }

    #[test]
    fn attention_then_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = Matrix::uniform(2, 2, 1.0, &mut rng);
        let v = Matrix::uniform(2, 2, 1.0, &mut rng);
        let q0 = Matrix::uniform(2, 2, 1.0, &mut rng);
        let f = |q: &Matrix| {
            let (out, w) = attention(q, &k, &v).unwrap();
            let ones = Matrix::filled(out.rows(), out.cols(), 1.0);
            let g = attention_backward(q, &k, &v, &w, &ones).unwrap();
            (out.sum(), g.dq)
        };
        let err = finite_diff_check(f, &q0, 1e-4);
        assert!(err < 1e-4, "{err}");
    }
}
