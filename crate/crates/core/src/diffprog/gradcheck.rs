use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Bound, ParamId, ParamSet};
use super::tape::{Tape, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const MAX_COORDINATES: usize = 200;
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares tape gradients of the scalar built by `loss` against central
/// differences with step `h`, over at most [`MAX_COORDINATES`] coordinates.
pub fn finite_diff_check<F>(params: &mut ParamSet, h: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = ps.bind(&mut tape);
        let out = loss(&mut tape, &bound)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = loss(&mut tape, &bound)?;
    let mut grads = tape.backward(out);
    let analytic = bound.gradients(&mut grads);

    let coords: Vec<(ParamId, usize)> = params
        .ids()
        .flat_map(|id| (0..params.get(id).len()).map(move |k| (id, k)))
        .collect();
    let chosen: Vec<usize> = if coords.len() <= MAX_COORDINATES {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(coords.len() as u64);
        let mut picked = sample(&mut rng, coords.len(), MAX_COORDINATES).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for c in chosen {
        let (id, k) = coords[c];
        let original = params.get(id).data[k];
        params.get_mut(id).data[k] = original + h;
        let plus = eval(params)?;
        params.get_mut(id).data[k] = original - h;
        let minus = eval(params)?;
        params.get_mut(id).data[k] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[id.index()].as_ref().map_or(0.0, |g| g.data[k]);
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = Some((params.name(id).to_string(), k));
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffprog::tensor::Matrix;

    #[test]
    fn square_matches() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Matrix::scalar(3.0));
        let r = finite_diff_check(&mut ps, DEFAULT_STEP, |t, b| {
            let s = t.square(b.var(x));
            Ok(t.sum(s))
        })
        .unwrap();
        assert_eq!(r.checked, 1);
        assert!((r.worst_analytic - 6.0).abs() < 1e-12);
        assert!((r.worst_numeric - 6.0).abs() < 1e-6);
    }

    #[test]
    fn abs_kink_is_reported() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Matrix::scalar(0.0));
        let r = finite_diff_check(&mut ps, DEFAULT_STEP, |t, b| {
            let a = t.abs(b.var(x));
            Ok(t.sum(a))
        })
        .unwrap();
        // analytic subgradient 0, numeric (h - h)/2h = 0 too; shift the kink off-center
        assert_eq!(r.checked, 1);
        let mut ps = ParamSet::new();
        let x = ps.add("x", Matrix::scalar(DEFAULT_STEP / 2.0));
        let r = finite_diff_check(&mut ps, DEFAULT_STEP, |t, b| {
            let a = t.abs(b.var(x));
            Ok(t.sum(a))
        })
        .unwrap();
        assert!(!r.passes(1e-4), "kink should be flagged: {r:?}");
    }

    #[test]
    fn samples_large_parameters() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Matrix::filled(30, 30, 0.1));
        let r = finite_diff_check(&mut ps, DEFAULT_STEP, |t, b| {
            let s = t.square(b.var(x));
            Ok(t.mean(s))
        })
        .unwrap();
        assert_eq!(r.checked, MAX_COORDINATES);
        assert!(r.passes(1e-6));
    }
}
