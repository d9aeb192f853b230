/// Euclidean projection of `v` onto the probability simplex `{x ≥ 0, Σx = 1}`.
///
/// Sort-based: find the largest `ρ` with `u_ρ − (Σ_{i≤ρ} u_i − 1)/ρ > 0` on the
/// descending-sorted values, then shift and clip.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Vector-Jacobian product of the projection at a point whose projection is
/// `projected`: on the support the gradient minus its support mean, zero elsewhere.
pub fn simplex_projection_pullback(projected: &[f64], grad: &[f64]) -> Vec<f64> {
    let support: Vec<usize> = (0..projected.len()).filter(|&i| projected[i] > 0.0).collect();
    if support.is_empty() {
        return vec![0.0; grad.len()];
    }
    let mean = support.iter().map(|&i| grad[i]).sum::<f64>() / support.len() as f64;
    let mut out = vec![0.0; grad.len()];
    for &i in &support {
        out[i] = grad[i] - mean;
    }
    out
}
