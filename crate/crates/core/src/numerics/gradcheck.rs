//! Central finite-difference comparison helpers.
//!
//! These are forward-evaluation-only: they never touch the tape, so they
//! stay an independent check on whatever `backward` produced.

/// Default perturbation step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Default relative tolerance.
pub const DEFAULT_REL_TOL: f64 = 1e-4;

/// Absolute escape hatch below which a difference is considered noise:
/// central differences of an O(1) objective carry ~1e-10 of roundoff, so
/// differences under this floor cannot be distinguished from it.
pub const DEFAULT_ABS_TOL: f64 = 1e-8;

/// Central difference from the two perturbed evaluations.
pub fn central(f_plus: f64, f_minus: f64, step: f64) -> f64 {
    (f_plus - f_minus) / (2.0 * step)
}

/// Scale-free disagreement between an analytic and a numeric gradient.
pub fn rel_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Whether `analytic` agrees with `numeric` within `rel_tol`, with an
/// absolute floor of `abs_tol` for entries too small to compare relatively.
pub fn agrees(analytic: f64, numeric: f64, rel_tol: f64, abs_tol: f64) -> bool {
    (analytic - numeric).abs() <= abs_tol || rel_error(analytic, numeric) <= rel_tol
}

/// Worst-entry summary of a gradient comparison.
#[derive(Debug, Default, Clone)]
pub struct Disagreement {
    pub max_rel: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub failures: usize,
}

/// Compare a full analytic gradient against numeric values, entry by entry.
pub fn compare(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> Disagreement {
    assert_eq!(analytic.len(), numeric.len());
    let mut report = Disagreement::default();
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        if !agrees(a, n, rel_tol, abs_tol) {
            report.failures += 1;
        }
        let r = if (a - n).abs() <= abs_tol {
            0.0
        } else {
            rel_error(a, n)
        };
        if r >= report.max_rel {
            report.max_rel = r;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = n;
        }
    }
    report
}
