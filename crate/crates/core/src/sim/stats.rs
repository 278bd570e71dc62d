/// Percentiles with linear interpolation between order statistics, the
/// default convention of common numerical libraries. `levels` are in
/// percent and must be sorted ascending. `data` is reordered.
pub fn percentiles(data: &mut [f64], levels: &[f64]) -> Vec<f64> {
    let n = data.len();
    if n == 0 {
        return vec![f64::NAN; levels.len()];
    }
    let mut out = Vec::with_capacity(levels.len());
    // the slice left of `floor` is partitioned below it after each select
    let mut done = 0;
    for &p in levels {
        let rank = p / 100.0 * (n - 1) as f64;
        let lo = rank.floor() as usize;
        let frac = rank - lo as f64;
        let x_lo = if lo >= done {
            let (_, v, _) = data[done..].select_nth_unstable_by(lo - done, f64::total_cmp);
            done = lo;
            *v
        } else {
            data[lo]
        };
        let x_hi = if frac > 0.0 && lo + 1 < n {
            data[lo + 1..].iter().copied().min_by(f64::total_cmp).unwrap()
        } else {
            x_lo
        };
        out.push(x_lo + frac * (x_hi - x_lo));
    }
    out
}
