use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a − b) > 0`.
    pub p_greater: f64,
}

/// Paired t-test on `a[i] − b[i]`. A zero-variance difference yields
/// `t = ±∞` (p = 0 or 1) or `p = 0.5` if all differences vanish.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&diffs);
    let se = std_dev(&diffs) / (diffs.len() as f64).sqrt();
    let df = (diffs.len() - 1) as f64;
    let (t, p) = if se == 0.0 {
        match m.partial_cmp(&0.0)? {
            std::cmp::Ordering::Greater => (f64::INFINITY, 0.0),
            std::cmp::Ordering::Less => (f64::NEG_INFINITY, 1.0),
            std::cmp::Ordering::Equal => (0.0, 0.5),
        }
    } else {
        let t = m / se;
        let dist = StudentsT::new(0.0, 1.0, df).ok()?;
        (t, 1.0 - dist.cdf(t))
    };
    Some(TTest {
        mean_diff: m,
        t,
        df,
        p_greater: p,
    })
}
