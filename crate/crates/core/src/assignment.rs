//! Maximum-weight one-to-one assignment (Hungarian method with potentials,
//! O(n^3)) over a rectangular non-negative integer matrix.

use alloc::vec;
use alloc::vec::Vec;

/// Returns, for every row, the matched column (or `None` when the row is
/// paired with padding), maximizing the total matched weight.
pub(crate) fn max_weight_assignment(weights: &[Vec<u64>], cols: usize) -> Vec<Option<usize>> {
    let rows = weights.len();
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().copied().max().unwrap_or(0) as i128;
    let cost = |r: usize, c: usize| -> i128 {
        let w = if r < rows && c < cols { weights[r][c] as i128 } else { 0 };
        max - w
    };

    // 1-based potentials; column 0 is a sentinel.
    let inf = i128::MAX / 4;
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        owner[0] = r;
        let mut col = 0usize;
        let mut min_to = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col] = true;
            let row = owner[col];
            let mut delta = inf;
            let mut next = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost(row - 1, c - 1) - u[row] - v[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    way[c] = col;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    next = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col = next;
            if owner[col] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col];
            owner[col] = owner[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }

    let mut result = vec![None; rows];
    for c in 1..=n {
        let r = owner[c];
        if r >= 1 && r <= rows && c <= cols {
            result[r - 1] = Some(c - 1);
        }
    }
    result
}
