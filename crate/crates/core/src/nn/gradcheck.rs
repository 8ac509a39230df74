//! Finite-difference gradient checking.
//!
//! Models expose their parameters as one flat `f64` vector; the checker
//! perturbs entries with a central difference and compares against the
//! analytic gradient. The suite always runs in 64-bit.

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error between an analytic and a numerical gradient entry.
///
/// Differences below 1e-9 are treated as zero: they are at the level of the
/// finite-difference truncation noise itself and carry no signal about the
/// backward pass.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-9 {
        return 0.0;
    }
    diff / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Report from a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Central-difference check of `analytic` against `loss` over the flat
/// parameter vector. `indices` selects which entries to probe (checking all
/// entries of a convolutional network is wasteful); pass `None` for all.
///
/// `loss` must treat `params` as the complete model state.
pub fn check_gradient<LF>(
    params: &mut [f64],
    analytic: &[f64],
    indices: Option<&[usize]>,
    h: f64,
    mut loss: LF,
) -> GradCheckReport
where
    LF: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let all: Vec<usize>;
    let probe: &[usize] = match indices {
        Some(ix) => ix,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: probe.len(),
    };
    for &i in probe {
        let orig = params[i];
        params[i] = orig + h;
        let plus = loss(params);
        params[i] = orig - h;
        let minus = loss(params);
        params[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}
