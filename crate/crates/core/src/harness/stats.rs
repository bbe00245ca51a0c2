use serde::Serialize;

/// Mean with standard error of the mean (sample standard deviation over
/// `sqrt(n)`); `sem` is `None` below two observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: Option<f64>,
    pub n: usize,
}

impl MeanSem {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<MeanSem> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(MeanSem { mean, sem, n })
    }
}
