//! Primal heuristics for the branch-and-bound incumbent.

use std::collections::BTreeSet;

use super::exact::Prepared;
use super::ErsInstance;

/// Drops trajectories one at a time, each time removing the one whose
/// removal shrinks the tube the most, until `m` remain. Ties go to the
/// highest index so that low indices stay selected.
pub fn greedy_peel(inst: &ErsInstance) -> Vec<bool> {
    let prep = Prepared::new(inst);
    let mut removed = vec![false; inst.n()];
    peel(&prep, &mut removed, 0);
    removed.iter().map(|r| !r).collect()
}

/// Continues peeling from a partial removal set until `k` are removed.
fn peel(p: &Prepared, removed: &mut [bool], mut count: usize) {
    let k = p.n - p.inst.m();
    let mut top: Vec<usize> = vec![p.n; p.dims];
    let mut bot: Vec<usize> = vec![0; p.dims];
    let mut gain = vec![0.0; p.n];
    let mut touched: Vec<usize> = Vec::new();
    while count < k {
        for d in 0..p.dims {
            let ord = p.ord(d);
            // top[d] is one past the current maximum in ascending order
            while removed[ord[top[d] - 1] as usize] {
                top[d] -= 1;
            }
            while removed[ord[bot[d]] as usize] {
                bot[d] += 1;
            }
            let t1 = ord[top[d] - 1] as usize;
            let t2 = ord[..top[d] - 1].iter().rev().find(|&&i| !removed[i as usize]);
            let b1 = ord[bot[d]] as usize;
            let b2 = ord[bot[d] + 1..].iter().find(|&&i| !removed[i as usize]);
            let w = p.weight(d);
            if let Some(&t2) = t2 {
                let g = w * (p.v(t1, d) - p.v(t2 as usize, d));
                if g > 0.0 {
                    if gain[t1] == 0.0 {
                        touched.push(t1);
                    }
                    gain[t1] += g;
                }
            }
            if let Some(&b2) = b2 {
                let g = w * (p.v(b2 as usize, d) - p.v(b1, d));
                if g > 0.0 {
                    if gain[b1] == 0.0 {
                        touched.push(b1);
                    }
                    gain[b1] += g;
                }
            }
        }
        let pick = touched
            .iter()
            .copied()
            .max_by(|&a, &b| gain[a].total_cmp(&gain[b]).then(a.cmp(&b)))
            .unwrap_or_else(|| (0..p.n).rev().find(|&i| !removed[i]).unwrap_or(0));
        for &i in &touched {
            gain[i] = 0.0;
        }
        touched.clear();
        removed[pick] = true;
        count += 1;
    }
}

/// Swap local search: replace a selected extreme trajectory by a rejected
/// one while that strictly lowers the area.
fn local_search(p: &Prepared, removed: &mut [bool], area: &mut f64) {
    let mut widths = vec![0.0; p.dims];
    for _pass in 0..64 {
        let mut extremes = BTreeSet::new();
        for d in 0..p.dims {
            let ord = p.ord(d);
            if let Some(&i) = ord.iter().rev().find(|&&i| !removed[i as usize]) {
                extremes.insert(i as usize);
            }
            if let Some(&i) = ord.iter().find(|&&i| !removed[i as usize]) {
                extremes.insert(i as usize);
            }
        }
        let out: Vec<usize> = (0..p.n).filter(|&i| removed[i]).collect();
        let mut improved = false;
        'search: for &s in &extremes {
            for &r in &out {
                removed[s] = true;
                removed[r] = false;
                let a = p.area_excluding(removed, &mut widths);
                if a < *area {
                    *area = a;
                    improved = true;
                    break 'search;
                }
                removed[s] = false;
                removed[r] = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Best of: greedy peel, and for every time step the removal set that gives
/// that step its tightest interval (completed greedily); then refined by
/// swaps. Returns `(area, selection mask)`.
pub(crate) fn initial_incumbent(p: &Prepared) -> (f64, Vec<bool>) {
    let k = p.n - p.inst.m();
    let mut widths = vec![0.0; p.dims];
    let mut seeds: BTreeSet<Vec<u32>> = BTreeSet::new();
    seeds.insert(Vec::new());
    for d in 0..p.dims {
        let ord = p.ord(d);
        let mut best = (f64::INFINITY, 0);
        for a in 0..=k {
            let w = p.v(ord[p.n - 1 - a] as usize, d) - p.v(ord[k - a] as usize, d);
            if w < best.0 {
                best = (w, a);
            }
        }
        let a = best.1;
        let mut set: Vec<u32> = ord[p.n - a..].iter().chain(&ord[..k - a]).copied().collect();
        set.sort_unstable();
        seeds.insert(set);
    }

    let mut best: Option<(f64, Vec<bool>)> = None;
    for seed in &seeds {
        let mut removed = vec![false; p.n];
        for &i in seed {
            removed[i as usize] = true;
        }
        peel(p, &mut removed, seed.len());
        let area = p.area_excluding(&removed, &mut widths);
        if best.as_ref().map_or(true, |(ba, br)| area < *ba || (area == *ba && removed < *br)) {
            best = Some((area, removed));
        }
    }
    let (mut area, mut removed) = best.unwrap_or((f64::INFINITY, vec![false; p.n]));
    local_search(p, &mut removed, &mut area);
    let mask: Vec<bool> = removed.iter().map(|r| !r).collect();
    // recompute through the common path so leaf comparisons are bit-exact
    let area = p.inst.subset_area(&mask);
    (area, mask)
}
