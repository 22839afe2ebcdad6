//! Multi-rank selection: the values at several order-statistic ranks in
//! expected linear time, sharing the partitioning work between ranks.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

const SMALL: usize = 16;

/// Values at the given 1-based ranks of the ascending order of `values`.
pub fn select_ranks(values: &[f64], ranks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let n = values.len();
    if let Some(&bad) = ranks.iter().find(|&&r| r == 0 || r > n) {
        return Err(Error::InvalidParameter(format!(
            "rank {bad} outside 1..={n}"
        )));
    }
    let mut wanted: Vec<usize> = ranks.iter().map(|r| r - 1).collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut scratch = values.to_vec();
    let mut out = Vec::with_capacity(wanted.len());
    select_in_place(&mut scratch, 0, &wanted, &mut out);
    Ok(out.into_iter().map(|(i, v)| (i + 1, v)).collect())
}

/// Selects the sorted, deduplicated 0-based positions `wanted` (relative to
/// `offset`) out of `a`, reordering `a`.
pub(crate) fn select_in_place(
    a: &mut [f64],
    offset: usize,
    wanted: &[usize],
    out: &mut Vec<(usize, f64)>,
) {
    if wanted.is_empty() {
        return;
    }
    if a.len() <= SMALL {
        a.sort_unstable_by(f64::total_cmp);
        out.extend(wanted.iter().map(|&w| (w, a[w - offset])));
        return;
    }
    let pivot = choose_pivot(a);
    let (lt, gt) = partition3(a, pivot);
    let split_lo = wanted.partition_point(|&w| w < offset + lt);
    let split_hi = wanted.partition_point(|&w| w < offset + gt);
    let (left, rest) = wanted.split_at(split_lo);
    let (mid, right) = rest.split_at(split_hi - split_lo);
    let (a_left, a_rest) = a.split_at_mut(lt);
    let a_right = &mut a_rest[gt - lt..];
    select_in_place(a_left, offset, left, out);
    out.extend(mid.iter().map(|&w| (w, pivot)));
    select_in_place(a_right, offset + gt, right, out);
}

fn choose_pivot(a: &[f64]) -> f64 {
    // median of three positions scrambled by the length, which avoids the
    // quadratic case on sorted and reverse-sorted input
    let n = a.len();
    let h = (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let i = (h % n as u64) as usize;
    let j = ((h >> 21) % n as u64) as usize;
    let k = n / 2;
    let (x, y, z) = (a[i], a[j], a[k]);
    let max_xy = if x.total_cmp(&y) == Ordering::Less { y } else { x };
    let min_xy = if x.total_cmp(&y) == Ordering::Less { x } else { y };
    if z.total_cmp(&min_xy) == Ordering::Less {
        min_xy
    } else if z.total_cmp(&max_xy) == Ordering::Greater {
        max_xy
    } else {
        z
    }
}

/// Three-way partition around `pivot`: `a[..lt] < pivot`,
/// `a[lt..gt] == pivot`, `a[gt..] > pivot`.
fn partition3(a: &mut [f64], pivot: f64) -> (usize, usize) {
    let (mut lt, mut i, mut gt) = (0, 0, a.len());
    while i < gt {
        match a[i].total_cmp(&pivot) {
            Ordering::Less => {
                a.swap(lt, i);
                lt += 1;
                i += 1;
            }
            Ordering::Greater => {
                gt -= 1;
                a.swap(i, gt);
            }
            Ordering::Equal => i += 1,
        }
    }
    (lt, gt)
}
