//! Dense phase-one simplex for feasibility of `A x ≤ b` over a box.
//!
//! Variables are shifted to `z = x − lo ≥ 0` and box upper bounds become
//! ordinary rows. Bland's rule keeps the method free of cycling; an
//! iteration cap still guards against numerical stalls.

use super::property::{InputBox, LinearAtom};

/// Constraint satisfaction tolerance, relative to the row's largest
/// coefficient.
pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Feasible(Vec<f64>),
    Infeasible,
    /// Iteration limit or numerical trouble; neither answer is certain.
    Undecided(String),
}

/// Feasibility of `coeffs · x ≤ rhs` for every atom, with `x` in `bounds`.
/// The atoms' variable kind is ignored; their length must match the box.
pub fn lp_feasible(constraints: &[LinearAtom], bounds: &InputBox) -> LpOutcome {
    let rows: Vec<(&[f64], f64)> = constraints.iter().map(|a| (a.coeffs.as_slice(), a.rhs)).collect();
    solve(&rows, &bounds.lo, &bounds.hi)
}

/// Checks `a · x ≤ b` within [`FEAS_TOL`] scaled by the row's largest coefficient.
pub(crate) fn row_satisfied(a: &[f64], b: f64, x: &[f64]) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lhs: f64 = a.iter().zip(x).map(|(c, v)| c * v).sum();
    lhs - b <= FEAS_TOL * scale.max(1.0)
}

pub(crate) fn solve(rows: &[(&[f64], f64)], lo: &[f64], hi: &[f64]) -> LpOutcome {
    let n = lo.len();
    if rows.iter().any(|(a, b)| a.len() != n || !b.is_finite() || a.iter().any(|v| !v.is_finite())) {
        return LpOutcome::Undecided("malformed constraint".into());
    }
    // fixed dimensions are substituted out
    let free: Vec<usize> = (0..n).filter(|&j| hi[j] > lo[j]).collect();
    let nf = free.len();

    let mut cons: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len() + nf);
    for (a, b) in rows {
        let shifted = b - a.iter().zip(lo).map(|(c, l)| c * l).sum::<f64>();
        let coeffs: Vec<f64> = free.iter().map(|&j| a[j]).collect();
        let scale = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let full = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            if shifted < -FEAS_TOL * full {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        cons.push((coeffs.iter().map(|c| c / scale).collect(), shifted / scale));
    }
    for (k, &j) in free.iter().enumerate() {
        let mut e = vec![0.0; nf];
        e[k] = 1.0;
        cons.push((e, hi[j] - lo[j]));
    }

    let z = if nf == 0 {
        Some(Vec::new())
    } else {
        match phase_one(&cons, nf) {
            Ok(z) => z,
            Err(reason) => return LpOutcome::Undecided(reason),
        }
    };
    let Some(z) = z else { return LpOutcome::Infeasible };
    let mut x = lo.to_vec();
    for (k, &j) in free.iter().enumerate() {
        x[j] = (lo[j] + z[k]).clamp(lo[j], hi[j]);
    }
    if rows.iter().all(|(a, b)| row_satisfied(a, *b, &x)) {
        LpOutcome::Feasible(x)
    } else {
        LpOutcome::Undecided("simplex point fails the final constraint check".into())
    }
}

/// Returns `Ok(Some(z))` with `z ≥ 0` feasible, `Ok(None)` if infeasible.
fn phase_one(cons: &[(Vec<f64>, f64)], n: usize) -> Result<Option<Vec<f64>>, String> {
    let m = cons.len();
    let art_rows: Vec<usize> = (0..m).filter(|&i| cons[i].1 < 0.0).collect();
    let na = art_rows.len();
    // columns: n structural, m slacks, na artificials, then rhs
    let cols = n + m + na;
    let width = cols + 1;
    let mut t = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut art_of_row = vec![usize::MAX; m];
    for (k, &i) in art_rows.iter().enumerate() {
        art_of_row[i] = k;
    }
    for (i, (a, b)) in cons.iter().enumerate() {
        let row = &mut t[i * width..(i + 1) * width];
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[j];
        }
        row[n + i] = sign;
        row[cols] = sign * b;
        if art_of_row[i] != usize::MAX {
            let c = n + m + art_of_row[i];
            row[c] = 1.0;
            basis[i] = c;
        } else {
            basis[i] = n + i;
        }
    }
    if na == 0 {
        return Ok(Some(vec![0.0; n]));
    }
    // reduced costs of the phase-one objective Σ artificials
    let mut cost = vec![0.0; width];
    for &i in &art_rows {
        for j in 0..width {
            cost[j] -= t[i * width + j];
        }
    }
    for k in 0..na {
        cost[n + m + k] = 0.0;
    }

    let max_iter = 50 * (m + cols) + 1000;
    for _ in 0..max_iter {
        // objective value is −cost[cols]
        if -cost[cols] <= FEAS_TOL * 1e-3 {
            break;
        }
        let Some(enter) = (0..cols).find(|&j| cost[j] < -COST_TOL) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + enter];
            if a > PIVOT_TOL {
                let r = t[i * width + cols].max(0.0) / a;
                leave = match leave {
                    None => Some((i, r)),
                    Some((li, lr)) => {
                        if r < lr - 1e-13 * lr.abs().max(1.0)
                            || (r <= lr + 1e-13 * lr.abs().max(1.0) && basis[i] < basis[li])
                        {
                            Some((i, r))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((p, _)) = leave else {
            return Err("phase-one objective unbounded (numerical failure)".into());
        };
        pivot(&mut t, &mut cost, width, m, p, enter);
        basis[p] = enter;
    }
    let value = -cost[cols];
    if value > FEAS_TOL {
        let improving = (0..cols).any(|j| cost[j] < -COST_TOL);
        if improving {
            return Err("simplex iteration limit reached".into());
        }
        return Ok(None);
    }
    let mut z = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            z[basis[i]] = t[i * width + cols].max(0.0);
        }
    }
    Ok(Some(z))
}

fn pivot(t: &mut [f64], cost: &mut [f64], width: usize, m: usize, p: usize, q: usize) {
    let pv = t[p * width + q];
    for v in &mut t[p * width..(p + 1) * width] {
        *v /= pv;
    }
    let prow: Vec<f64> = t[p * width..(p + 1) * width].to_vec();
    for i in 0..m {
        if i == p {
            continue;
        }
        let f = t[i * width + q];
        if f != 0.0 {
            let row = &mut t[i * width..(i + 1) * width];
            for (r, pr) in row.iter_mut().zip(&prow) {
                *r -= f * pr;
            }
            row[q] = 0.0;
        }
    }
    let f = cost[q];
    if f != 0.0 {
        for (c, pr) in cost.iter_mut().zip(&prow) {
            *c -= f * pr;
        }
        cost[q] = 0.0;
    }
}
