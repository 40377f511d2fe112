//! Aggregation multigrid for weighted graph Laplacians with a Dirichlet excess.
//!
//! Each level holds an operator `diag(excess + strength) - W` with `W >= 0`.
//! Coarse levels merge pairs of strongly coupled nodes; coarse weights are
//! sums of the fine edges crossing between aggregates and coarse excess is
//! the aggregate's total excess, so diagonals are formed without
//! cancellation no matter how widely the weights range.

use crate::sparse::CsrMatrix;

/// Levels at or below this size are solved exactly.
const COARSEST: usize = 32;
/// Largest level eliminated densely if coarsening stalls above [`COARSEST`].
const DENSE_MAX: usize = 2048;
/// Symmetric Gauss-Seidel sweeps standing in for an exact coarsest solve.
const FALLBACK_SWEEPS: usize = 20;
/// Over-correction for piecewise-constant interpolation from aggregates of
/// about four nodes.
const COARSE_SCALE: f64 = 1.6;

#[derive(Debug, Clone)]
pub(crate) struct GraphOperator {
    ptr: Vec<usize>,
    nbr: Vec<usize>,
    w: Vec<f64>,
    excess: Vec<f64>,
    diag: Vec<f64>,
}

impl GraphOperator {
    /// From the unseeded Laplacian block and its coupling to seeded nodes.
    pub(crate) fn from_blocks(lu: &CsrMatrix, coupling: &CsrMatrix) -> Self {
        let n = lu.nrows();
        let rows = (0..n).map(|i| lu.row(i).filter(|&(j, _)| j != i).map(|(j, v)| (j, -v)).collect()).collect();
        let excess = (0..n).map(|i| coupling.row(i).map(|(_, v)| -v).sum()).collect();
        Self::from_rows(rows, excess)
    }

    fn from_rows(rows: Vec<Vec<(usize, f64)>>, excess: Vec<f64>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut nbr = Vec::new();
        let mut w = Vec::new();
        let mut diag = Vec::with_capacity(rows.len());
        ptr.push(0);
        for (row, e) in rows.into_iter().zip(&excess) {
            let mut d = *e;
            for (j, v) in row {
                nbr.push(j);
                w.push(v);
                d += v;
            }
            ptr.push(nbr.len());
            diag.push(d);
        }
        Self { ptr, nbr, w, excess, diag }
    }

    pub(crate) fn len(&self) -> usize {
        self.diag.len()
    }

    fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.nbr[r.clone()].iter().copied().zip(self.w[r].iter().copied())
    }

    fn residual(&self, r: &[f64], e: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            let mut acc = r[i] - self.diag[i] * e[i];
            for (j, v) in self.edges(i) {
                acc += v * e[j];
            }
            out[i] = acc;
        }
    }

    fn relax(&self, i: usize, r: &[f64], e: &mut [f64]) {
        let mut acc = r[i];
        for (j, v) in self.edges(i) {
            acc += v * e[j];
        }
        e[i] = acc / self.diag[i];
    }

    fn gs_forward(&self, r: &[f64], e: &mut [f64]) {
        for i in 0..self.len() {
            self.relax(i, r, e);
        }
    }

    fn gs_backward(&self, r: &[f64], e: &mut [f64]) {
        for i in (0..self.len()).rev() {
            self.relax(i, r, e);
        }
    }

    /// Greedy heavy-edge matching on scale-free strength `w / sqrt(d_i d_j)`.
    /// Returns the aggregate of every node and the aggregate count.
    fn pair_up(&self) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(self.nbr.len() / 2);
        for i in 0..n {
            for (j, v) in self.edges(i) {
                if i < j {
                    cand.push((v / (self.diag[i] * self.diag[j]).sqrt(), i, j));
                }
            }
        }
        cand.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut agg = vec![usize::MAX; n];
        let mut next = 0;
        for &(_, i, j) in &cand {
            if agg[i] == usize::MAX && agg[j] == usize::MAX {
                agg[i] = next;
                agg[j] = next;
                next += 1;
            }
        }
        for a in agg.iter_mut().filter(|a| **a == usize::MAX) {
            *a = next;
            next += 1;
        }
        (agg, next)
    }

    fn coarsen(&self, agg: &[usize], nc: usize) -> GraphOperator {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        let mut excess = vec![0.0; nc];
        for i in 0..self.len() {
            let a = agg[i];
            excess[a] += self.excess[i];
            for (j, v) in self.edges(i) {
                if agg[j] != a {
                    rows[a].push((agg[j], v));
                }
            }
        }
        for row in rows.iter_mut() {
            row.sort_unstable_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        GraphOperator::from_rows(rows, excess)
    }
}

/// Dense elimination of a small graph operator. Pivots are sums of
/// remaining edge weights and excess, so no subtraction occurs.
#[derive(Debug, Clone)]
struct DenseFactor {
    n: usize,
    w: Vec<f64>,
    d: Vec<f64>,
}

impl DenseFactor {
    fn new(op: &GraphOperator) -> Self {
        let n = op.len();
        let mut w = vec![0.0; n * n];
        let mut e = op.excess.clone();
        for i in 0..n {
            for (j, v) in op.edges(i) {
                w[i * n + j] += v;
            }
        }
        let mut d = vec![0.0; n];
        let mut nz = Vec::new();
        for k in 0..n {
            let dk = e[k] + w[k * n + k + 1..(k + 1) * n].iter().sum::<f64>();
            // only reachable for a component without excess, which callers rule out
            d[k] = if dk > 0.0 { dk } else { 1.0 };
            nz.clear();
            nz.extend((k + 1..n).filter(|&j| w[k * n + j] > 0.0));
            for &i in &nz {
                let f = w[i * n + k] / d[k];
                e[i] += f * e[k];
                for &j in &nz {
                    if j != i {
                        w[i * n + j] += f * w[k * n + j];
                    }
                }
            }
        }
        Self { n, w, d }
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, rhs: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut b = rhs.to_vec();
        for k in 0..n {
            if b[k] != 0.0 {
                let f = b[k] / self.d[k];
                for i in k + 1..n {
                    let wik = self.w[i * n + k];
                    if wik > 0.0 {
                        b[i] += wik * f;
                    }
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..n {
                let wkj = self.w[k * n + j];
                if wkj > 0.0 {
                    acc += wkj * x[j];
                }
            }
            x[k] = acc / self.d[k];
        }
    }
}

#[derive(Debug, Clone)]
enum Coarsest {
    Dense(DenseFactor),
    Sweeps,
}

/// Each level aggregates two rounds of heavy-edge pairing.
/// V-cycle with one forward Gauss-Seidel sweep before the coarse correction
/// and one backward sweep after it, which keeps the preconditioner
/// symmetric.
#[derive(Debug, Clone)]
pub(crate) struct Hierarchy {
    levels: Vec<GraphOperator>,
    aggregates: Vec<Vec<usize>>,
    coarsest: Coarsest,
}

impl Hierarchy {
    pub(crate) fn new(fine: GraphOperator) -> Self {
        let mut levels = vec![fine];
        let mut aggregates = Vec::new();
        loop {
            let op = levels.last().expect("at least one level");
            if op.len() <= COARSEST {
                break;
            }
            let (mut agg, mut nc) = op.pair_up();
            if nc as f64 > 0.9 * op.len() as f64 {
                break;
            }
            let mut coarse = op.coarsen(&agg, nc);
            if coarse.len() > COARSEST {
                let (agg2, nc2) = coarse.pair_up();
                for a in agg.iter_mut() {
                    *a = agg2[*a];
                }
                nc = nc2;
                coarse = op.coarsen(&agg, nc);
            }
            aggregates.push(agg);
            levels.push(coarse);
        }
        let last = levels.last().expect("at least one level");
        let coarsest = if last.len() <= DENSE_MAX { Coarsest::Dense(DenseFactor::new(last)) } else { Coarsest::Sweeps };
        Self { levels, aggregates, coarsest }
    }

    pub(crate) fn depth(&self) -> usize {
        self.levels.len()
    }

    pub(crate) fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }

    fn cycle(&self, l: usize, r: &[f64], e: &mut [f64]) {
        let op = &self.levels[l];
        e.iter_mut().for_each(|v| *v = 0.0);
        if l + 1 == self.levels.len() {
            match &self.coarsest {
                Coarsest::Dense(f) => f.solve(r, e),
                Coarsest::Sweeps => {
                    for _ in 0..FALLBACK_SWEEPS {
                        op.gs_forward(r, e);
                        op.gs_backward(r, e);
                    }
                }
            }
            return;
        }
        op.gs_forward(r, e);
        let mut res = vec![0.0; op.len()];
        op.residual(r, e, &mut res);
        let agg = &self.aggregates[l];
        let nc = self.levels[l + 1].len();
        let mut rc = vec![0.0; nc];
        for (i, &a) in agg.iter().enumerate() {
            rc[a] += res[i];
        }
        let mut ec = vec![0.0; nc];
        self.cycle(l + 1, &rc, &mut ec);
        for (i, &a) in agg.iter().enumerate() {
            e[i] += COARSE_SCALE * ec[a];
        }
        op.gs_backward(r, e);
    }
}
