//! Small quadrature and summation helpers shared by the solver modules.
//!
//! Everything here is deliberately deterministic: cell sums are produced in
//! index order and combined with a fixed pairwise tree, so results do not
//! depend on thread count or scheduling.

/// 4-point Gauss–Legendre nodes on [-1, 1].
pub const GAUSS4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];

/// Weights matching [`GAUSS4_NODES`].
pub const GAUSS4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_86,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_86,
];

/// Sums a slice with a fixed pairwise association tree.
///
/// The bracketing depends only on `xs.len()`, never on threading, so the
/// result is bit-stable and has O(log n) rounding-error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Composite 4-point Gauss–Legendre rule over `[a, b]` with `cells` equal
/// subintervals. Returns 0 for an empty or inverted interval.
pub fn gauss_line<F: FnMut(f64) -> f64>(a: f64, b: f64, cells: usize, mut f: F) -> f64 {
    if !(b > a) || cells == 0 {
        return 0.0;
    }
    let h = (b - a) / cells as f64;
    let mut sums = Vec::with_capacity(cells);
    for c in 0..cells {
        let lo = a + c as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (node, weight) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
            s += weight * f(mid + half * node);
        }
        sums.push(s * half);
    }
    pairwise_sum(&sums)
}

/// Picks a composite-rule cell count proportional to interval length,
/// clamped to `[min_cells, max_cells]`.
pub fn cells_for_length(len: f64, per_unit: f64, min_cells: usize, max_cells: usize) -> usize {
    if !len.is_finite() || len <= 0.0 {
        return min_cells;
    }
    ((len * per_unit).ceil() as usize).clamp(min_cells, max_cells)
}

/// Composite Gauss over `[a, b]` split at the given interior breakpoints,
/// so piecewise-smooth integrands keep the full convergence order. Breaks
/// outside `(a, b)` are ignored; cell counts scale with piece length.
pub fn gauss_line_split<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    breaks: &[f64],
    per_unit: f64,
    min_cells: usize,
    max_cells: usize,
    mut f: F,
) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut pieces = Vec::with_capacity(cuts.len() + 1);
    let mut lo = a;
    for c in cuts {
        pieces.push((lo, c));
        lo = c;
    }
    pieces.push((lo, b));
    let sums: Vec<f64> = pieces
        .iter()
        .map(|&(lo, hi)| {
            gauss_line(lo, hi, cells_for_length(hi - lo, per_unit, min_cells, max_cells), &mut f)
        })
        .collect();
    pairwise_sum(&sums)
}
