use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::numerics::DenseMatrix;

pub const DEFAULT_TRIM: f64 = 0.1;

/// TwoNN intrinsic dimension of the rows of `points`.
///
/// For each point the ratio `μ = r₂/r₁` of its second to first nearest-neighbour
/// distance is computed by exhaustive search. With the ratios sorted and
/// `F̂(μ₍ᵢ₎) = (i − ½)/m`, the dimension is the least-squares slope through the
/// origin of `−ln(1 − F̂)` against `ln μ`, after discarding `⌊trim·m⌋` ratios
/// at each end.
pub fn twonn_estimate(points: &DenseMatrix, trim_fraction: f64) -> Result<f64> {
    let m = points.rows();
    if m < 10 {
        return Err(invalid!("twonn: need at least 10 points, got {m}"));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(invalid!(
            "twonn: trim fraction must lie in [0, 0.5), got {trim_fraction}"
        ));
    }
    points.ensure_finite("twonn points")?;
    let mut mu = Vec::with_capacity(m);
    for i in 0..m {
        let (r1, j1, r2) = two_nearest(points, i);
        if r1 == 0.0 {
            return Err(Error::DuplicatePoints(i, j1));
        }
        mu.push(libm::sqrt(r2 / r1));
    }
    mu.sort_by(f64::total_cmp);
    let cut = (trim_fraction * m as f64) as usize;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &u) in mu.iter().enumerate().take(m - cut).skip(cut) {
        let f = (i as f64 + 0.5) / m as f64;
        let x = libm::log(u);
        let y = -libm::log(1.0 - f);
        sxy += x * y;
        sxx += x * x;
    }
    if sxx == 0.0 {
        return Err(invalid!("twonn: all retained neighbour ratios equal one"));
    }
    Ok(sxy / sxx)
}

/// Squared distances to the two nearest neighbours of point `i`, and the index
/// of the nearest one.
fn two_nearest(points: &DenseMatrix, i: usize) -> (f64, usize, f64) {
    let p = points.row(i);
    let (mut d1, mut j1, mut d2) = (f64::INFINITY, usize::MAX, f64::INFINITY);
    for j in 0..points.rows() {
        if j == i {
            continue;
        }
        let d: f64 = p.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < d1 {
            d2 = d1;
            d1 = d;
            j1 = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (d1, j1, d2)
}
