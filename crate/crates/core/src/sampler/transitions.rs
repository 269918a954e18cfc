//! Conjugate Dirichlet updates for the elite-status transition rows.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::model::TransitionRows;

/// Clamp away from exact 0/1 so downstream logs stay finite.
const SIMPLEX_EPS: f64 = 1e-12;

/// Draw (p, 1-p) ~ Dirichlet(a, b) via normalized Gamma variates.
pub fn draw_dirichlet2<R: Rng>(a: f64, b: f64, rng: &mut R) -> f64 {
    let ga = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    let gb = Gamma::new(b, 1.0).expect("positive shape").sample(rng);
    let total = ga + gb;
    let p = if total > 0.0 { ga / total } else { 0.5 };
    p.clamp(SIMPLEX_EPS, 1.0 - SIMPLEX_EPS)
}

/// Draw a transition row pair from its conjugate posterior given the four
/// transition counts `[n00, n01, n10, n11]`:
/// (nu00, nu01) ~ Dirichlet(n00 + omega, n01 + omega) and
/// (nu11, nu10) ~ Dirichlet(n11 + omega, n10 + omega).
pub fn draw_transition_rows<R: Rng>(counts: &[f64; 4], omega: f64, rng: &mut R) -> TransitionRows {
    draw_transition_rows_with(counts, &[omega; 4], rng)
}

/// As [`draw_transition_rows`] with a separate concentration per cell,
/// ordered `[omega00, omega01, omega10, omega11]`.
pub fn draw_transition_rows_with<R: Rng>(
    counts: &[f64; 4],
    omega: &[f64; 4],
    rng: &mut R,
) -> TransitionRows {
    let nu00 = draw_dirichlet2(counts[0] + omega[0], counts[1] + omega[1], rng);
    let nu11 = draw_dirichlet2(counts[3] + omega[3], counts[2] + omega[2], rng);
    [nu00, 1.0 - nu00, 1.0 - nu11, nu11]
}

/// Accumulate the transition counts of one career into `counts`,
/// including the fixed non-elite start before the first season.
/// `groups[t]` selects which count matrix the step entering season `t`
/// belongs to.
pub fn accumulate_counts(elite: &[bool], groups: &[usize], counts: &mut [[f64; 4]]) {
    debug_assert_eq!(elite.len(), groups.len());
    let mut prev = 0usize;
    for (t, &e) in elite.iter().enumerate() {
        let e = usize::from(e);
        counts[groups[t]][prev * 2 + e] += 1.0;
        prev = e;
    }
}
