/// Thomas algorithm for `lower[i]·u[i-1] + diag[i]·u[i] + upper[i]·u[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n-1]` are ignored. `scratch` needs length n. Returns
/// `false` on a zero or non-finite pivot.
pub(crate) fn solve(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) -> bool {
    let n = diag.len();
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return false;
    }
    out[0] = rhs[0] / pivot;
    for i in 1..n {
        scratch[i] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i] * scratch[i];
        if pivot == 0.0 || !pivot.is_finite() {
            return false;
        }
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i + 1] * out[i + 1];
    }
    out.iter().all(|v| v.is_finite())
}
