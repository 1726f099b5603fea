//! Sampling grids shared by the report builders.

/// Increasing integers in `[start, end]` spaced by roughly `ratio`, always
/// containing both endpoints.
pub fn geometric_grid(start: u64, end: u64, ratio: f64) -> Vec<u64> {
    assert!(ratio > 1.0, "grid ratio must exceed 1");
    if start > end {
        return Vec::new();
    }
    let start = start.max(1);
    let mut out = vec![start];
    let mut x = start as f64;
    loop {
        x *= ratio;
        let next = (x.round() as u64).max(out[out.len() - 1] + 1);
        if next >= end {
            break;
        }
        out.push(next);
        x = x.max(next as f64);
    }
    if *out.last().unwrap() != end {
        out.push(end);
    }
    out
}
