use crate::kernel::sq_dist;

/// The `k` rows of `reference` closest to `q`, as `(distance, index)` in
/// ascending order (ties by index). `skip` excludes one reference row.
pub(crate) fn knn(
    q: &[f64],
    reference: &[Vec<f64>],
    k: usize,
    skip: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, r)| (sq_dist(q, r), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(d.len());
    if k < d.len() && k > 0 {
        d.select_nth_unstable_by(k - 1, cmp);
    }
    d.truncate(k);
    d.sort_by(cmp);
    d.into_iter().map(|(s, i)| (s.sqrt(), i)).collect()
}

/// Distance from `q` to its nearest row of `reference`.
pub(crate) fn nearest_distance(q: &[f64], reference: &[Vec<f64>]) -> f64 {
    reference
        .iter()
        .map(|r| sq_dist(q, r))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}
