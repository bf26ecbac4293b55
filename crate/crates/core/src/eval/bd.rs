//! Bjøntegaard-Delta rate and quality.

use super::pchip::Pchip;
use super::EvalError;

/// Rate–quality curve: rates (Mbps) and qualities both strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, EvalError> {
        if points.len() < 2 {
            return Err(EvalError::TooFewPoints);
        }
        let ok = points.iter().all(|p| p.0 > 0.0 && p.0.is_finite() && p.1.is_finite())
            && points.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
        if !ok {
            return Err(EvalError::NotMonotone);
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn log_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0.log10()).collect()
    }

    fn qualities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

/// Mean of `test − reference` over the shared abscissa range.
fn mean_gap(reference: &Pchip, test: &Pchip) -> Result<f64, EvalError> {
    let lo = reference.x_min().max(test.x_min());
    let hi = reference.x_max().min(test.x_max());
    if !(hi > lo) {
        return Err(EvalError::NoOverlap);
    }
    Ok((test.integrate(lo, hi) - reference.integrate(lo, hi)) / (hi - lo))
}

/// Average bitrate difference in percent at equal quality; negative means
/// `test` needs less bitrate.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve) -> Result<f64, EvalError> {
    let r = Pchip::new(&reference.qualities(), &reference.log_rates()).ok_or(EvalError::NotMonotone)?;
    let t = Pchip::new(&test.qualities(), &test.log_rates()).ok_or(EvalError::NotMonotone)?;
    Ok((10f64.powf(mean_gap(&r, &t)?) - 1.0) * 100.0)
}

/// Average quality difference at equal bitrate; positive means `test` is
/// better.
pub fn bd_quality(reference: &RdCurve, test: &RdCurve) -> Result<f64, EvalError> {
    let r = Pchip::new(&reference.log_rates(), &reference.qualities()).ok_or(EvalError::NotMonotone)?;
    let t = Pchip::new(&test.log_rates(), &test.qualities()).ok_or(EvalError::NotMonotone)?;
    mean_gap(&r, &t)
}
