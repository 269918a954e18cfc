//! Forward-filtering backward-sampling for the two-state elite chain of a
//! single player.
//!
//! The chain starts in the non-elite state before the first observed
//! season. `rows[t]` is the transition row pair used to *enter* step `t`
//! (from the state at `t - 1`; for `t = 0` only its from-non-elite row is
//! used). `loglik[t]` holds the observation log-likelihood of season `t`
//! under each state.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::TransitionRows;

/// Reusable forward-filter buffer.
#[derive(Debug, Default)]
pub struct FfbsWorkspace {
    pub fwd: Vec<[f64; 2]>,
}

/// Compute the filtered distributions p(E_t | observations up to t).
/// Each step is normalized after a max-shift in log space, so the pass is
/// finite unless a likelihood pair underflows against a zero prior mass.
pub fn forward_filter(
    loglik: &[[f64; 2]],
    rows: &[TransitionRows],
    ws: &mut FfbsWorkspace,
) -> Result<()> {
    assert_eq!(loglik.len(), rows.len());
    let n = loglik.len();
    ws.fwd.clear();
    ws.fwd.reserve(n);
    for t in 0..n {
        let prior = if t == 0 {
            [rows[0][0], rows[0][1]]
        } else {
            let prev = ws.fwd[t - 1];
            let r = &rows[t];
            [
                prev[0] * r[0] + prev[1] * r[2],
                prev[0] * r[1] + prev[1] * r[3],
            ]
        };
        let mx = loglik[t][0].max(loglik[t][1]);
        let p = [
            (loglik[t][0] - mx).exp() * prior[0],
            (loglik[t][1] - mx).exp() * prior[1],
        ];
        let z = p[0] + p[1];
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::Sampler(format!(
                "forward filter degenerated at step {t} (normalizer {z})"
            )));
        }
        ws.fwd.push([p[0] / z, p[1] / z]);
    }
    Ok(())
}

/// Draw an exact joint path given a completed forward pass.
pub fn sample_backward<R: Rng>(
    fwd: &[[f64; 2]],
    rows: &[TransitionRows],
    rng: &mut R,
    out: &mut [bool],
) {
    let n = fwd.len();
    assert_eq!(out.len(), n);
    if n == 0 {
        return;
    }
    out[n - 1] = rng.gen::<f64>() < fwd[n - 1][1];
    for t in (0..n - 1).rev() {
        let to = usize::from(out[t + 1]);
        let row = &rows[t + 1];
        let p0 = fwd[t][0] * row[to];
        let p1 = fwd[t][1] * row[2 + to];
        out[t] = rng.gen::<f64>() * (p0 + p1) < p1;
    }
}

/// Exact smoothed marginals p(E_t | all observations) from the filtered
/// pass, via the standard fixed-interval recursion.
pub fn smoothed_marginals(fwd: &[[f64; 2]], rows: &[TransitionRows]) -> Vec<[f64; 2]> {
    let n = fwd.len();
    let mut out = vec![[0.0; 2]; n];
    if n == 0 {
        return out;
    }
    out[n - 1] = fwd[n - 1];
    for t in (0..n - 1).rev() {
        let row = &rows[t + 1];
        let pred = [
            fwd[t][0] * row[0] + fwd[t][1] * row[2],
            fwd[t][0] * row[1] + fwd[t][1] * row[3],
        ];
        for e in 0..2 {
            let mut acc = 0.0;
            for b in 0..2 {
                if pred[b] > 0.0 {
                    acc += row[e * 2 + b] * out[t + 1][b] / pred[b];
                }
            }
            out[t][e] = fwd[t][e] * acc;
        }
    }
    out
}
