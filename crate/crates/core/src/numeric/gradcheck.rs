use alloc::string::String;

use super::{Handle, NumericError, ParamId, ParamSet, Tape};

/// Outcome of a central-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    /// Parameter name and coordinate where the worst error occurred.
    pub worst: Option<(String, usize)>,
    /// Number of coordinates probed.
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Relative-error floor used in the denominator.
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// Compares the tape's gradient of `f` with central differences
/// `(f(θ + step·e) - f(θ - step·e)) / (2·step)` for every coordinate of
/// every parameter in `params`.
///
/// `f` records a scalar on the tape it is given; it is called once for the
/// analytic pass and twice per coordinate for the probes.
pub fn grad_check<F, E>(params: &ParamSet, step: f64, f: F) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<'_>) -> Result<Handle, E>,
    E: From<NumericError>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(NumericError::InvalidStep(step).into());
    }
    let analytic = {
        let mut tape = Tape::new(params);
        let seed = f(&mut tape)?;
        tape.backward(seed)?
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for p in 0..params.len() {
        let id = ParamId(p);
        for k in 0..params.value(id).data().len() {
            let original = params.value(id).data()[k];
            let mut eval = |value: f64| -> Result<f64, NumericError> {
                probe.value_mut(id).data_mut()[k] = value;
                let mut tape = Tape::new(&probe);
                let out = f(&mut tape).ok().map(|h| tape.scalar(h));
                match out {
                    Some(Ok(v)) if v.is_finite() => Ok(v),
                    _ => Err(NumericError::NonFiniteProbe {
                        param: String::from(params.get(id).name()),
                        index: k,
                    }),
                }
            };
            let plus = eval(original + step)?;
            let minus = eval(original - step)?;
            probe.value_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let exact = analytic.coordinate(id, k);
            let denom = exact.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let err = (exact - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((String::from(params.get(id).name()), k));
            }
        }
    }
    Ok(report)
}
