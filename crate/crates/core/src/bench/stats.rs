//! Mean and t-based 95% confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    /// Half-width of the 95% interval; `None` below two samples.
    pub half_width: Option<f64>,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width.unwrap_or(0.0)
    }
}

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    if n == 0 {
        return MeanCi {
            n,
            mean: f64::NAN,
            half_width: None,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let half_width = (n >= 2).then(|| {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        t_quantile(n - 1) * (var / n as f64).sqrt()
    });
    MeanCi {
        n,
        mean,
        half_width,
    }
}

/// Interval for `num / den` from the two intervals' extremes. `None` when
/// the denominator interval reaches zero.
pub fn ratio_bounds(num: &MeanCi, den: &MeanCi) -> Option<(f64, f64)> {
    if den.lower() <= 0.0 {
        return None;
    }
    Some((num.lower() / den.upper(), num.upper() / den.lower()))
}
