//! Small quadrature and summation helpers shared by the modules.

/// Pairwise (tree) summation. The reduction tree depends only on the slice
/// length, so results are reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Trapezoid integral of samples `y` at abscissae `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Running trapezoid integral, starting at zero.
pub fn cumulative_trapezoid(x: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    if !x.is_empty() {
        out.push(0.0);
    }
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

/// Trapezoid weights for (possibly non-uniform) nodes `x`.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.len()];
    for i in 1..x.len() {
        let h = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// Mass, mean and standard deviation of a tabulated non-negative density.
///
/// Returns `None` when the total mass is not positive.
pub fn density_moments(x: &[f64], density: &[f64]) -> Option<(f64, f64, f64)> {
    let mass = trapezoid(x, density);
    if mass <= 0.0 || !mass.is_finite() {
        return None;
    }
    let first: Vec<f64> = x.iter().zip(density).map(|(a, b)| a * b).collect();
    let mean = trapezoid(x, &first) / mass;
    let second: Vec<f64> = x
        .iter()
        .zip(density)
        .map(|(a, b)| (a - mean) * (a - mean) * b)
        .collect();
    let var = trapezoid(x, &second) / mass;
    Some((mass, mean, var.max(0.0).sqrt()))
}

/// Full width at half maximum of a tabulated single-peaked density, with
/// linear interpolation of the two half-maximum crossings next to the peak.
///
/// Returns `None` for an empty or non-positive density, or when the density
/// does not fall below half its maximum on both sides.
pub fn full_width_half_max(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (peak, &top) = y
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })?;
    if !(top > 0.0) {
        return None;
    }
    let half = 0.5 * top;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=peak).rev().find(|&i| y[i - 1] < half).map(|i| cross(i - 1, i))?;
    let right = (peak..x.len() - 1).find(|&i| y[i + 1] < half).map(|i| cross(i, i + 1))?;
    Some(right - left)
}
