//! Cubic B-spline basis for the per-position age trajectories.
//!
//! The basis is clamped on an age interval: the first and last knots are
//! repeated `degree + 1` times, so with no interior knots the four basis
//! functions reduce to the cubic Bernstein polynomials and the trajectory
//! spans all cubics on the interval. Ages outside the interval are clamped
//! to the nearest endpoint rather than extrapolated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    age_lo: f64,
    age_hi: f64,
    interior: Vec<f64>,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn age_lo(&self) -> f64 {
        self.age_lo
    }

    pub fn age_hi(&self) -> f64 {
        self.age_hi
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    /// Number of basis functions: interior knots + degree + 1.
    pub fn n_basis(&self) -> usize {
        self.interior.len() + DEGREE + 1
    }
}

/// Build a clamped cubic basis over `[age_lo, age_hi]` with the given
/// interior knots. No interior knots yields exactly four basis functions.
pub fn make_basis(age_lo: f64, age_hi: f64, interior_knots: &[f64]) -> Result<SplineBasis> {
    if !(age_lo < age_hi) {
        return Err(Error::Argument(format!(
            "basis range must satisfy age_lo < age_hi, got [{age_lo}, {age_hi}]"
        )));
    }
    for w in interior_knots.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::Argument(format!(
                "interior knots must be sorted, got {w:?}"
            )));
        }
    }
    for &k in interior_knots {
        if !(k > age_lo && k < age_hi) {
            return Err(Error::Argument(format!(
                "interior knot {k} outside open interval ({age_lo}, {age_hi})"
            )));
        }
    }
    let mut knots = Vec::with_capacity(interior_knots.len() + 2 * (DEGREE + 1));
    knots.extend(std::iter::repeat(age_lo).take(DEGREE + 1));
    knots.extend_from_slice(interior_knots);
    knots.extend(std::iter::repeat(age_hi).take(DEGREE + 1));
    Ok(SplineBasis {
        age_lo,
        age_hi,
        interior: interior_knots.to_vec(),
        knots,
    })
}

/// Evaluate all basis functions at `age` (clamped into the basis range).
/// The weights are nonnegative and sum to one.
pub fn eval_basis(basis: &SplineBasis, age: f64) -> Vec<f64> {
    let mut out = vec![0.0; basis.n_basis()];
    eval_basis_into(basis, age, &mut out);
    out
}

/// As [`eval_basis`], writing into a caller-provided slice.
pub fn eval_basis_into(basis: &SplineBasis, age: f64, out: &mut [f64]) {
    assert_eq!(out.len(), basis.n_basis());
    out.fill(0.0);
    let u = age.clamp(basis.age_lo, basis.age_hi);
    let knots = &basis.knots;
    let n = basis.n_basis();

    // Knot span index: largest i with knots[i] <= u < knots[i+1], with the
    // right endpoint folded into the last nontrivial span.
    let mut span = DEGREE;
    while span < n - 1 && u >= knots[span + 1] {
        span += 1;
    }

    // Triangular recurrence over the degree+1 nonzero functions on the span.
    let mut vals = [0.0f64; DEGREE + 1];
    vals[0] = 1.0;
    let mut left = [0.0f64; DEGREE + 1];
    let mut right = [0.0f64; DEGREE + 1];
    for j in 1..=DEGREE {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { vals[r] / denom };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    for (r, &v) in vals.iter().enumerate() {
        out[span - DEGREE + r] = v;
    }
}

/// Trajectory value at `age`: dot product of the coefficient vector with
/// the basis weights.
pub fn trajectory(coeffs: &[f64], basis: &SplineBasis, age: f64) -> Result<f64> {
    if coeffs.len() != basis.n_basis() {
        return Err(Error::Argument(format!(
            "coefficient length {} does not match basis size {}",
            coeffs.len(),
            basis.n_basis()
        )));
    }
    let w = eval_basis(basis, age);
    Ok(coeffs.iter().zip(w.iter()).map(|(c, b)| c * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_basis_counts() {
        let b = make_basis(20.0, 49.0, &[]).unwrap();
        assert_eq!(b.n_basis(), 4);
        let b = make_basis(20.0, 49.0, &[30.0]).unwrap();
        assert_eq!(b.n_basis(), 5);
        let b = make_basis(20.0, 49.0, &[28.0, 33.0, 38.0]).unwrap();
        assert_eq!(b.n_basis(), 7);
    }

    #[test]
    fn rejects_bad_ranges_and_knots() {
        assert!(make_basis(30.0, 20.0, &[]).is_err());
        assert!(make_basis(20.0, 20.0, &[]).is_err());
        assert!(make_basis(20.0, 49.0, &[35.0, 30.0]).is_err());
        assert!(make_basis(20.0, 49.0, &[20.0]).is_err());
        assert!(make_basis(20.0, 49.0, &[50.0]).is_err());
    }

    #[test]
    fn endpoint_weights() {
        let b = make_basis(20.0, 49.0, &[]).unwrap();
        assert_eq!(eval_basis(&b, 20.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(eval_basis(&b, 49.0), vec![0.0, 0.0, 0.0, 1.0]);
        // Clamping: outside ages evaluate at the nearest endpoint.
        assert_eq!(eval_basis(&b, 10.0), eval_basis(&b, 20.0));
        assert_eq!(eval_basis(&b, 60.0), eval_basis(&b, 49.0));
    }

    #[test]
    fn midpoint_matches_bernstein() {
        // With no interior knots the clamped cubic basis is the Bernstein
        // basis; at t = 0.5 it is (1/8, 3/8, 3/8, 1/8).
        let b = make_basis(20.0, 49.0, &[]).unwrap();
        let w = eval_basis(&b, 34.5);
        let expected = [0.125, 0.375, 0.375, 0.125];
        for (got, want) in w.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn partition_of_unity() {
        for knots in [vec![], vec![30.0], vec![26.0, 31.0, 40.0]] {
            let b = make_basis(20.0, 49.0, &knots).unwrap();
            for i in 0..=1000 {
                let age = 20.0 + 29.0 * i as f64 / 1000.0;
                let w = eval_basis(&b, age);
                assert!(w.iter().all(|&x| x >= 0.0));
                let s: f64 = w.iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "sum {s} at age {age}");
            }
        }
    }

    #[test]
    fn local_support_with_interior_knots() {
        // Knot vector [20 x4, 30, 49 x4]: the first basis function is
        // supported on [20, 30], the last on [30, 49].
        let b = make_basis(20.0, 49.0, &[30.0]).unwrap();
        let w = eval_basis(&b, 40.0);
        assert_eq!(w[0], 0.0);
        let w = eval_basis(&b, 25.0);
        assert_eq!(w[4], 0.0);
    }

    #[test]
    fn trajectory_values() {
        let b = make_basis(20.0, 49.0, &[]).unwrap();
        let zero = vec![0.0; 4];
        let flat = vec![2.5; 4];
        for i in 0..50 {
            let age = 20.0 + i as f64 * 0.6;
            assert_eq!(trajectory(&zero, &b, age).unwrap(), 0.0);
            let f = trajectory(&flat, &b, age).unwrap();
            assert!((f - 2.5).abs() < 1e-12);
        }
        let ramp = vec![0.0, 1.0, 2.0, 3.0];
        let mid = trajectory(&ramp, &b, 34.5).unwrap();
        assert!((mid - 1.5).abs() < 1e-12);
    }

    #[test]
    fn trajectory_length_mismatch() {
        let b = make_basis(20.0, 49.0, &[]).unwrap();
        assert!(trajectory(&[1.0, 2.0], &b, 30.0).is_err());
    }

    #[test]
    fn shift_invariance() {
        let b0 = make_basis(20.0, 49.0, &[31.0]).unwrap();
        let b1 = make_basis(25.0, 54.0, &[36.0]).unwrap();
        let coeffs = [0.3, -0.2, 0.5, 0.1, -0.4];
        for i in 0..100 {
            let age = 20.0 + 29.0 * i as f64 / 100.0;
            let f0 = trajectory(&coeffs, &b0, age).unwrap();
            let f1 = trajectory(&coeffs, &b1, age + 5.0).unwrap();
            assert!((f0 - f1).abs() < 1e-9);
        }
    }
}
