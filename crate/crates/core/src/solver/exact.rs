//! Depth-first branch-and-bound over include/exclude decisions.
//!
//! A node fixes some trajectories in (`F`), some out (`O`) and leaves the
//! rest undecided. With `r` exclusions still to make, the node bound relaxes
//! the coupling between time steps: for every (channel, step) it takes the
//! tightest interval that covers `F` after dropping at most `r` undecided
//! values from the two ends of that step's sorted column. Each step's
//! interval can only be wider in a real completion, so the weighted sum is
//! admissible.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use super::heuristic::initial_incumbent;
use super::{better, ErsInstance, ErsSolution, SolveConfig, SolveError};

const UNDECIDED: u8 = 0;
const IN: u8 = 1;
const OUT: u8 = 2;

/// Per-step sort orders shared by the search and the heuristics.
pub(crate) struct Prepared<'a> {
    pub inst: &'a ErsInstance,
    pub n: usize,
    pub dims: usize,
    pub n_c: usize,
    vals: &'a [f64],
    /// `order[d * n + j]`: trajectory with the j-th smallest value at dim d.
    order: Vec<u32>,
}

impl<'a> Prepared<'a> {
    pub fn new(inst: &'a ErsInstance) -> Self {
        let data = inst.data();
        let n = data.len();
        let dims = data.row_len();
        let vals = data.values();
        let mut order = Vec::with_capacity(n * dims);
        let mut idx: Vec<u32> = (0..n as u32).collect();
        for d in 0..dims {
            idx.sort_by(|&a, &b| {
                vals[a as usize * dims + d]
                    .total_cmp(&vals[b as usize * dims + d])
                    .then(a.cmp(&b))
            });
            order.extend_from_slice(&idx);
        }
        Prepared {
            inst,
            n,
            dims,
            n_c: data.n_channels(),
            vals,
            order,
        }
    }

    #[inline]
    pub fn v(&self, i: usize, d: usize) -> f64 {
        self.vals[i * self.dims + d]
    }

    #[inline]
    pub fn ord(&self, d: usize) -> &[u32] {
        &self.order[d * self.n..(d + 1) * self.n]
    }

    #[inline]
    pub fn weight(&self, d: usize) -> f64 {
        self.inst.weights()[d % self.n_c]
    }

    /// Area of all trajectories not flagged in `removed`. Runs in
    /// `O(dims * (|removed| + 1))`.
    pub fn area_excluding(&self, removed: &[bool], widths: &mut [f64]) -> f64 {
        for (d, w) in widths.iter_mut().enumerate() {
            let ord = self.ord(d);
            let top = ord.iter().rev().find(|&&i| !removed[i as usize]).copied().unwrap_or(0);
            let bot = ord.iter().find(|&&i| !removed[i as usize]).copied().unwrap_or(0);
            *w = self.v(top as usize, d) - self.v(bot as usize, d);
        }
        self.inst.area_of_widths(widths)
    }
}

struct Shared {
    best_area: AtomicU64,
    nodes: AtomicU64,
    aborted: AtomicBool,
    deadline: Instant,
    node_limit: u64,
}

impl Shared {
    fn best(&self) -> f64 {
        f64::from_bits(self.best_area.load(Ordering::Relaxed))
    }

    fn offer(&self, area: f64) {
        // areas are non-negative, so their bit patterns order like the values
        self.best_area.fetch_min(area.to_bits(), Ordering::Relaxed);
    }
}

struct Search<'p, 'a> {
    p: &'p Prepared<'a>,
    shared: &'p Shared,
    m: usize,
    k: usize,
    status: Vec<u8>,
    n_in: usize,
    n_out: usize,
    best_area: f64,
    best_mask: Vec<bool>,
    nodes: u64,
    unreported: u64,
    aborted: bool,
    widths: Vec<f64>,
    hval: Vec<f64>,
    hid: Vec<u32>,
    lval: Vec<f64>,
    lid: Vec<u32>,
    score: Vec<f64>,
    touched: Vec<u32>,
}

enum Outcome {
    Prune,
    Leaf(Vec<bool>),
    Branch(usize),
}

impl<'p, 'a> Search<'p, 'a> {
    fn new(p: &'p Prepared<'a>, shared: &'p Shared, status: Vec<u8>, best_area: f64, best_mask: Vec<bool>) -> Self {
        let m = p.inst.m();
        let k = p.n - m;
        let n_in = status.iter().filter(|&&s| s == IN).count();
        let n_out = status.iter().filter(|&&s| s == OUT).count();
        Search {
            p,
            shared,
            m,
            k,
            status,
            n_in,
            n_out,
            best_area,
            best_mask,
            nodes: 0,
            unreported: 0,
            aborted: false,
            widths: vec![0.0; p.dims],
            hval: vec![0.0; k + 1],
            hid: vec![0; k + 1],
            lval: vec![0.0; k + 1],
            lid: vec![0; k + 1],
            score: vec![0.0; p.n],
            touched: Vec::new(),
        }
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        self.unreported += 1;
        if self.unreported >= 256 {
            let total = self.shared.nodes.fetch_add(self.unreported, Ordering::Relaxed) + self.unreported;
            self.unreported = 0;
            if total >= self.shared.node_limit || Instant::now() >= self.shared.deadline {
                self.shared.aborted.store(true, Ordering::Relaxed);
            }
        }
        if self.shared.aborted.load(Ordering::Relaxed) {
            self.aborted = true;
        }
        !self.aborted
    }

    fn offer(&mut self, mask: Vec<bool>) {
        let area = self.p.inst.subset_area(&mask);
        if better(area, &mask, self.best_area, &self.best_mask) {
            self.best_area = area;
            self.best_mask = mask;
            self.shared.offer(area);
        }
    }

    /// Selection mask of the lexicographically smallest completion.
    fn lex_completion(&self) -> Vec<bool> {
        let mut need = self.m - self.n_in;
        self.status
            .iter()
            .map(|&s| match s {
                IN => true,
                UNDECIDED if need > 0 => {
                    need -= 1;
                    true
                }
                _ => false,
            })
            .collect()
    }

    /// Whether some completion could precede the incumbent in lex order.
    fn may_precede_incumbent(&self) -> bool {
        let lex = self.lex_completion();
        super::lex_less(&lex, &self.best_mask)
    }

    /// Relaxation bound; fills `score` with each undecided trajectory's
    /// excess over the relaxed tube.
    fn bound(&mut self) -> f64 {
        let p = self.p;
        let r = self.k - self.n_out;
        for d in 0..p.dims {
            let ord = p.ord(d);
            let amax = walk(ord.iter().rev(), &self.status, r, p, d, &mut self.hval, &mut self.hid);
            let bmax = walk(ord.iter(), &self.status, r, p, d, &mut self.lval, &mut self.lid);
            let mut best = f64::INFINITY;
            let (mut ba, mut bb) = (0, 0);
            for a in 0..=amax {
                let b = (r - a).min(bmax);
                let w = self.hval[a] - self.lval[b];
                if w < best {
                    best = w;
                    ba = a;
                    bb = b;
                }
            }
            self.widths[d] = best;
            let wd = p.weight(d);
            let (hi, lo) = (self.hval[ba], self.lval[bb]);
            for j in 0..ba {
                let s = wd * (self.hval[j] - hi);
                if s > 0.0 {
                    let i = self.hid[j];
                    if self.score[i as usize] == 0.0 {
                        self.touched.push(i);
                    }
                    self.score[i as usize] += s;
                }
            }
            for j in 0..bb {
                let s = wd * (lo - self.lval[j]);
                if s > 0.0 {
                    let i = self.lid[j];
                    if self.score[i as usize] == 0.0 {
                        self.touched.push(i);
                    }
                    self.score[i as usize] += s;
                }
            }
        }
        p.inst.area_of_widths(&self.widths)
    }

    fn take_branch_var(&mut self) -> Option<usize> {
        let mut pick: Option<(f64, u32)> = None;
        for &i in &self.touched {
            let s = self.score[i as usize];
            match pick {
                Some((bs, bi)) if s < bs || (s == bs && i > bi) => {}
                _ => pick = Some((s, i)),
            }
        }
        for &i in &self.touched {
            self.score[i as usize] = 0.0;
        }
        self.touched.clear();
        pick.map(|(_, i)| i as usize)
    }

    fn evaluate(&mut self) -> Outcome {
        let r = self.k - self.n_out;
        let q = self.m - self.n_in;
        if r == 0 || q == 0 {
            let mask = self
                .status
                .iter()
                .map(|&s| s == IN || (s == UNDECIDED && r == 0))
                .collect();
            return Outcome::Leaf(mask);
        }
        let bound = self.bound();
        let var = self.take_branch_var();
        if bound > self.shared.best() || bound > self.best_area {
            return Outcome::Prune;
        }
        if bound == self.best_area && !self.may_precede_incumbent() {
            return Outcome::Prune;
        }
        match var {
            Some(i) => Outcome::Branch(i),
            // relaxed tube already holds every remaining trajectory, so all
            // completions share the bound's area
            None => Outcome::Leaf(self.lex_completion()),
        }
    }

    fn set(&mut self, i: usize, s: u8) {
        match s {
            IN => self.n_in += 1,
            OUT => self.n_out += 1,
            _ => {}
        }
        self.status[i] = s;
    }

    fn unset(&mut self, i: usize) {
        match self.status[i] {
            IN => self.n_in -= 1,
            OUT => self.n_out -= 1,
            _ => {}
        }
        self.status[i] = UNDECIDED;
    }

    fn dfs(&mut self) {
        if !self.tick() {
            return;
        }
        match self.evaluate() {
            Outcome::Prune => {}
            Outcome::Leaf(mask) => self.offer(mask),
            Outcome::Branch(i) => {
                self.set(i, IN);
                self.dfs();
                self.unset(i);
                if self.aborted {
                    return;
                }
                self.set(i, OUT);
                self.dfs();
                self.unset(i);
            }
        }
    }

    /// Like `dfs`, but stops `depth` levels down and records the open nodes.
    fn split(&mut self, depth: usize, frontier: &mut Vec<Vec<u8>>) {
        if depth == 0 {
            frontier.push(self.status.clone());
            return;
        }
        if !self.tick() {
            return;
        }
        match self.evaluate() {
            Outcome::Prune => {}
            Outcome::Leaf(mask) => self.offer(mask),
            Outcome::Branch(i) => {
                self.set(i, IN);
                self.split(depth - 1, frontier);
                self.unset(i);
                self.set(i, OUT);
                self.split(depth - 1, frontier);
                self.unset(i);
            }
        }
    }

    fn flush(&mut self) {
        self.shared.nodes.fetch_add(self.unreported, Ordering::Relaxed);
        self.unreported = 0;
    }
}

/// Collects up to `r + 1` non-excluded values walking one end of a sorted
/// column. Returns how many leading entries may be dropped: the walk stops
/// at the first forced-in trajectory.
#[inline]
fn walk<'o>(
    iter: impl Iterator<Item = &'o u32>,
    status: &[u8],
    r: usize,
    p: &Prepared,
    d: usize,
    val: &mut [f64],
    id: &mut [u32],
) -> usize {
    let mut count = 0;
    for &i in iter {
        match status[i as usize] {
            OUT => continue,
            s => {
                val[count] = p.v(i as usize, d);
                id[count] = i;
                if s == IN || count == r {
                    return count;
                }
                count += 1;
            }
        }
    }
    // unreachable for consistent counts: at least r + 1 trajectories remain
    count.saturating_sub(1)
}

/// Exact minimum-area selection of `m` trajectories.
///
/// The incumbent starts from a greedy peel (refined by swap local search);
/// the search then proves or improves it. With `cfg.workers > 1` the top of
/// the tree is expanded sequentially and the open subtrees are searched in
/// parallel against a shared incumbent area. The returned selection does not
/// depend on the worker count.
pub fn solve_exact(inst: &ErsInstance, cfg: &SolveConfig) -> Result<ErsSolution, SolveError> {
    cfg.validate()?;
    let start = Instant::now();
    let n = inst.n();
    let m = inst.m();
    if m == n {
        let all = vec![true; n];
        let area = inst.subset_area(&all);
        return inst.solution(all, area, true, 0, start.elapsed().as_secs_f64());
    }
    let prep = Prepared::new(inst);
    let (inc_area, inc_mask) = initial_incumbent(&prep);
    let shared = Shared {
        best_area: AtomicU64::new(inc_area.to_bits()),
        nodes: AtomicU64::new(0),
        aborted: AtomicBool::new(false),
        deadline: start + cfg.time_limit,
        node_limit: cfg.node_limit,
    };

    let mut root = Search::new(&prep, &shared, vec![UNDECIDED; n], inc_area, inc_mask);
    let (best_area, best_mask) = if cfg.workers <= 1 {
        root.dfs();
        root.flush();
        (root.best_area, root.best_mask)
    } else {
        let depth = (usize::BITS - (8 * cfg.workers).leading_zeros()) as usize;
        let mut frontier = Vec::new();
        root.split(depth, &mut frontier);
        root.flush();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| SolveError::InstanceInvalid(e.to_string()))?;
        let (area0, mask0) = (root.best_area, root.best_mask.clone());
        let results: Vec<(f64, Vec<bool>)> = pool.install(|| {
            frontier
                .into_par_iter()
                .map(|status| {
                    let mut s = Search::new(&prep, &shared, status, area0, mask0.clone());
                    s.dfs();
                    s.flush();
                    (s.best_area, s.best_mask)
                })
                .collect()
        });
        results.into_iter().fold((area0, mask0), |(ba, bm), (a, mk)| {
            if better(a, &mk, ba, &bm) {
                (a, mk)
            } else {
                (ba, bm)
            }
        })
    };

    let aborted = shared.aborted.load(Ordering::Relaxed);
    let nodes = shared.nodes.load(Ordering::Relaxed);
    if aborted {
        log::warn!("search stopped after {nodes} nodes; returning best incumbent");
    }
    inst.solution(best_mask, best_area, !aborted, nodes, start.elapsed().as_secs_f64())
}
