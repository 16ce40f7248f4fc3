use serde::Serialize;

/// Discrepancies below this are treated as round-off and dropped from
/// convergence fits.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in natural-log units.
    pub residual_rms: f64,
    pub points: usize,
}

/// Least-squares fit of `log y = slope·log x + intercept`, skipping points
/// with `y` below [`ROUNDOFF_FLOOR`] or non-finite. Needs two usable points.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && y.is_finite() && **y >= ROUNDOFF_FLOOR)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    Some(LogLogFit { slope, intercept, residual_rms: (ss / n).sqrt(), points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn floor_points_are_dropped() {
        let xs = [0.1, 0.05, 0.025, 0.0125];
        let ys = [1e-2, 2.5e-3, 1e-14, 0.0];
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert_eq!(fit.points, 2);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit_loglog(&xs[..1], &ys[..1]).is_none());
    }
}
