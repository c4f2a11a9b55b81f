use crate::lp::LinearProgram;
use crate::model::{CostCurve, DeviceKind};

/// Adds one column per block with `p - sum(delta) = 0`, each block priced at
/// `weight * rate`. With convex surplus (producer rates rising, consumer
/// values falling) the LP fills blocks in order, so the block sum equals the
/// curve at `p`. Blocks beyond `p_hi` are dropped.
///
/// Returns the block columns, or `None` for a non-convex curve.
pub fn build_pwl_delta(
    lp: &mut LinearProgram,
    curve: &CostCurve,
    kind: DeviceKind,
    p_col: usize,
    p_hi: f64,
    weight: f64,
) -> Option<Vec<usize>> {
    let convex = match kind {
        DeviceKind::Producer => curve.is_nondecreasing(),
        DeviceKind::Consumer => curve.is_nonincreasing(),
    };
    if !convex {
        return None;
    }
    let mut cols = Vec::new();
    let mut left = p_hi.max(0.0);
    let n = curve.blocks.len();
    for (b, block) in curve.blocks.iter().enumerate() {
        if left <= 0.0 {
            break;
        }
        // the last block absorbs any width shortfall, matching CostCurve::eval
        let w = if b + 1 == n { left } else { block.width.min(left) };
        left -= w;
        cols.push(lp.add_col(0.0, w, weight * block.rate));
    }
    let mut row = vec![(p_col, 1.0)];
    row.extend(cols.iter().map(|&c| (c, -1.0)));
    lp.add_row(0.0, 0.0, row);
    Some(cols)
}
