use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the element with the largest relative error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the analytic gradient returned by `f` at `params` against
/// central differences `(f(x+h) − f(x−h)) / 2h`, element by element.
///
/// Relative error is `|a − n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(mut f: F, params: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&Tensor) -> Result<(f64, Tensor)>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument {
            op: "grad_check",
            reason: format!("step must be positive and finite, got {h}"),
        });
    }
    params.check_finite("params")?;
    let (value, analytic) = f(params)?;
    check_value(value, "f(params)")?;
    if analytic.shape() != params.shape() {
        return Err(Error::InvalidShape {
            op: "grad_check",
            reason: format!(
                "gradient shape {:?} differs from params {:?}",
                analytic.shape(),
                params.shape()
            ),
        });
    }
    analytic.check_finite("analytic gradient")?;

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..params.len() {
        let x = params.data()[i];
        probe.data_mut()[i] = x + h;
        let plus = f(&probe)?.0;
        probe.data_mut()[i] = x - h;
        let minus = f(&probe)?.0;
        probe.data_mut()[i] = x;
        for (v, side) in [(plus, "x+h"), (minus, "x-h")] {
            if !v.is_finite() {
                let index = params.unravel(i).unwrap_or_default();
                return Err(Error::NonFinite {
                    location: format!("f({side}) at params{index:?}"),
                    value: v,
                });
            }
        }

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if i == 0 || rel > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}

fn check_value(v: f64, location: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            location: location.to_string(),
            value: v,
        })
    }
}
