//! Combinatorial Dirichlet problem on a lattice graph.
//!
//! Seeded nodes are held at their one-hot label indicator; the unseeded
//! values minimise `1/2 * sum w_ij (x_i - x_j)^2`, i.e. solve
//! `L_U x = -B m` where `L_U` is the unseeded block of the graph Laplacian and
//! `B` couples unseeded rows to seeded columns. The solution is the
//! probability that a random walker started at a node first reaches a seed of
//! the given label.

use log::{debug, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::{connected_components, Components, LatticeGraph};
use crate::multilevel::{GraphOperator, Hierarchy};
use crate::sparse::CsrMatrix;
use crate::volume::{LabelSet, ProbabilityMap, VolumeError};

/// Per-node probabilities may leave `[0, 1]` by this much before clamping.
pub const SIMPLEX_EPS: f64 = 1e-6;
/// Violations beyond this are reported as errors rather than clamped.
pub const HARD_VIOLATION: f64 = 1e-4;
/// Largest system the dense oracle accepts.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no seeded nodes")]
    NoSeeds,
    #[error("seed vector has {actual} entries for {expected} nodes")]
    SeedLength { expected: usize, actual: usize },
    #[error("seed label {0} is not in the label set")]
    UnknownLabel(u16),
    #[error("component {component} ({size} nodes, first node {first_node}) has no seeds")]
    SeedlessComponent { component: usize, size: usize, first_node: usize },
    #[error("conjugate gradient did not converge for label {label} in {iterations} iterations (relative residual {residual:e})")]
    ConvergenceFailure { label: u16, iterations: usize, residual: f64 },
    #[error("probability {value} at node {node} is outside [0, 1] beyond tolerance")]
    ProbabilityOutOfRange { node: usize, value: f64 },
    #[error("dense reference solve limited to {limit} unknowns, got {size}")]
    TooLarge { size: usize, limit: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    /// Aggregation multigrid V-cycle; robust to weights spanning many
    /// orders of magnitude.
    Multilevel,
    Jacobi,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the preconditioned residual norm falls below
    /// `rel_tol` times the preconditioned norm of the right-hand side.
    pub rel_tol: f64,
    /// `None` means `10 * n_unseeded`, capped at 100 000.
    pub max_iters: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_iters: None, preconditioner: Preconditioner::Multilevel }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(SolverError::InvalidConfig(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.max_iters == Some(0) {
            return Err(SolverError::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn iteration_limit(&self, n_unknowns: usize) -> usize {
        self.max_iters.unwrap_or_else(|| (10 * n_unknowns).clamp(1, 100_000))
    }
}

/// Where a graph node lives in the partitioned system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Index into the seeded columns; carries the label index.
    Seeded {
        col: usize,
        label: usize,
    },
    Unseeded(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedlessComponent {
    pub component: usize,
    pub size: usize,
    pub first_node: usize,
}

/// Partitioned Laplacian system for one lattice and seed assignment.
#[derive(Debug, Clone)]
pub struct DirichletSystem<'g> {
    graph: &'g LatticeGraph,
    label_ids: Vec<u16>,
    slots: Vec<Slot>,
    unseeded: Vec<usize>,
    seeded: Vec<usize>,
    seed_label: Vec<usize>,
    lu: CsrMatrix,
    coupling: CsrMatrix,
    components: Components,
    seedless: Vec<SeedlessComponent>,
}

/// Partitions the graph into seeded and unseeded nodes and assembles `L_U`
/// and `B`. `seeds[node]` is the node's fixed label, if any.
pub fn assemble<'g>(
    graph: &'g LatticeGraph,
    seeds: &[Option<u16>],
    labels: &LabelSet,
) -> Result<DirichletSystem<'g>, SolverError> {
    let n = graph.n_nodes();
    if seeds.len() != n {
        return Err(SolverError::SeedLength { expected: n, actual: seeds.len() });
    }
    let mut slots = Vec::with_capacity(n);
    let mut unseeded = Vec::new();
    let mut seeded = Vec::new();
    let mut seed_label = Vec::new();
    for (node, s) in seeds.iter().enumerate() {
        match s {
            Some(id) => {
                let label = labels.index_of(*id).ok_or(SolverError::UnknownLabel(*id))?;
                slots.push(Slot::Seeded { col: seeded.len(), label });
                seeded.push(node);
                seed_label.push(label);
            }
            None => {
                slots.push(Slot::Unseeded(unseeded.len()));
                unseeded.push(node);
            }
        }
    }
    if seeded.is_empty() {
        return Err(SolverError::NoSeeds);
    }

    let mut lu_rows = Vec::with_capacity(unseeded.len());
    let mut b_rows = Vec::with_capacity(unseeded.len());
    for (row, &node) in unseeded.iter().enumerate() {
        let mut lu_row = Vec::new();
        let mut b_row = Vec::new();
        let mut diag = 0.0;
        let mut diag_pushed = false;
        for &(nb, w) in graph.neighbors(node) {
            diag += w;
            match slots[nb] {
                Slot::Unseeded(c) => {
                    if c > row && !diag_pushed {
                        lu_row.push((row, f64::NAN));
                        diag_pushed = true;
                    }
                    lu_row.push((c, -w));
                }
                Slot::Seeded { col, .. } => b_row.push((col, -w)),
            }
        }
        if !diag_pushed {
            lu_row.push((row, f64::NAN));
        }
        for e in lu_row.iter_mut() {
            if e.0 == row {
                e.1 = diag;
            }
        }
        lu_rows.push(lu_row);
        b_rows.push(b_row);
    }
    let lu = CsrMatrix::from_rows(unseeded.len(), lu_rows);
    let coupling = CsrMatrix::from_rows(seeded.len(), b_rows);

    let components = connected_components(graph);
    let mut has_seed = vec![false; components.count()];
    for &node in &seeded {
        has_seed[components.ids[node]] = true;
    }
    let mut first = vec![usize::MAX; components.count()];
    for (node, &c) in components.ids.iter().enumerate() {
        first[c] = first[c].min(node);
    }
    let seedless = (0..components.count())
        .filter(|&c| !has_seed[c])
        .map(|c| SeedlessComponent { component: c, size: components.sizes[c], first_node: first[c] })
        .collect();

    Ok(DirichletSystem {
        graph,
        label_ids: labels.ids(),
        slots,
        unseeded,
        seeded,
        seed_label,
        lu,
        coupling,
        components,
        seedless,
    })
}

/// Unseeded values for one label plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSolution {
    pub label: u16,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Final preconditioned residual relative to the right-hand side.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    pub label: u16,
    /// `false` for the closure label, which is never solved directly.
    pub solved: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Node-space random field: `m` probabilities per graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    label_ids: Vec<u16>,
    values: Vec<f64>,
}

impl ProbabilityField {
    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.label_ids.len()
    }

    pub fn label_ids(&self) -> &[u16] {
        &self.label_ids
    }

    pub fn node(&self, node: usize) -> &[f64] {
        let m = self.label_ids.len();
        &self.values[node * m..(node + 1) * m]
    }

    pub fn get(&self, node: usize, label_index: usize) -> f64 {
        self.values[node * self.label_ids.len() + label_index]
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &ProbabilityField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Scatter into voxel space; voxels outside the graph get zero.
    pub fn to_map(&self, graph: &LatticeGraph) -> ProbabilityMap {
        let mut map = ProbabilityMap::zeros(*graph.geometry(), self.label_ids.clone());
        for l in 0..self.label_ids.len() {
            let ch = map.channel_mut(l);
            for node in 0..self.n_nodes() {
                ch[graph.voxel_of(node)] = self.get(node, l);
            }
        }
        map
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub field: ProbabilityField,
    pub stats: Vec<LabelStats>,
    /// Nodes whose probabilities drifted beyond [`SIMPLEX_EPS`] and were
    /// clamped and renormalised.
    pub renormalized: usize,
}

impl<'g> DirichletSystem<'g> {
    pub fn graph(&self) -> &LatticeGraph {
        self.graph
    }

    pub fn label_ids(&self) -> &[u16] {
        &self.label_ids
    }

    pub fn n_unseeded(&self) -> usize {
        self.unseeded.len()
    }

    pub fn n_seeded(&self) -> usize {
        self.seeded.len()
    }

    pub fn unseeded_nodes(&self) -> &[usize] {
        &self.unseeded
    }

    pub fn seeded_nodes(&self) -> &[usize] {
        &self.seeded
    }

    pub fn slot(&self, node: usize) -> Slot {
        self.slots[node]
    }

    /// `L_U`, unseeded x unseeded.
    pub fn laplacian_unseeded(&self) -> &CsrMatrix {
        &self.lu
    }

    /// `B`, unseeded rows x seeded columns.
    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn seedless_components(&self) -> &[SeedlessComponent] {
        &self.seedless
    }

    fn check_seeded(&self) -> Result<(), SolverError> {
        match self.seedless.first() {
            Some(s) => {
                Err(SolverError::SeedlessComponent { component: s.component, size: s.size, first_node: s.first_node })
            }
            None => Ok(()),
        }
    }

    /// `-B m_label`: total weight from each unseeded node to seeds of the label.
    pub fn rhs(&self, label_index: usize) -> Vec<f64> {
        (0..self.unseeded.len())
            .map(|r| self.coupling.row(r).filter(|&(c, _)| self.seed_label[c] == label_index).map(|(_, v)| -v).sum())
            .collect()
    }
}

/// Solves `L_U x = -B m_label`.
///
/// Preconditioned conjugate gradients supply corrections inside an
/// iterative-refinement loop. The refinement residual is evaluated in flux
/// form, `sum_j w_ij (x_j - x_i)`, against an iterate held in double-double
/// precision. Clusters that are strongly coupled inside but only weakly
/// coupled to the rest of the graph leave a residual far below any relative
/// tolerance; a correction solve started from the already-small residual
/// exposes them, and refinement stops only once such a solve changes nothing.
pub fn solve_label(sys: &DirichletSystem<'_>, label: u16, cfg: &SolverConfig) -> Result<LabelSolution, SolverError> {
    cfg.validate()?;
    sys.check_seeded()?;
    Prepared::new(sys, cfg).solve(label)
}

enum Precond {
    Identity,
    Jacobi(Vec<f64>),
    Multilevel(Hierarchy),
}

impl Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Identity => z.copy_from_slice(r),
            Precond::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Precond::Multilevel(h) => h.apply(r, z),
        }
    }
}

/// A system together with its preconditioner, shared by all label solves.
struct Prepared<'s, 'g> {
    sys: &'s DirichletSystem<'g>,
    cfg: SolverConfig,
    precond: Precond,
    inv_diag: Vec<f64>,
}

impl<'s, 'g> Prepared<'s, 'g> {
    fn new(sys: &'s DirichletSystem<'g>, cfg: &SolverConfig) -> Self {
        let inv_diag: Vec<f64> = sys.lu.diagonal().iter().map(|&d| 1.0 / d).collect();
        let precond = match cfg.preconditioner {
            Preconditioner::None => Precond::Identity,
            Preconditioner::Jacobi => Precond::Jacobi(inv_diag.clone()),
            Preconditioner::Multilevel => {
                let h = Hierarchy::new(GraphOperator::from_blocks(&sys.lu, &sys.coupling));
                debug!("multilevel preconditioner: {} levels for {} unknowns", h.depth(), sys.lu.nrows());
                Precond::Multilevel(h)
            }
        };
        Self { sys, cfg: *cfg, precond, inv_diag }
    }

    fn solve(&self, label: u16) -> Result<LabelSolution, SolverError> {
        let sys = self.sys;
        let li = sys.label_ids.iter().position(|&l| l == label).ok_or(SolverError::UnknownLabel(label))?;
        let b = sys.rhs(li);
        let n = b.len();
        if n == 0 || b.iter().all(|&v| v == 0.0) {
            return Ok(LabelSolution { label, values: vec![0.0; n], iterations: 0, residual: 0.0 });
        }
        // residuals are reported in the diagonally scaled norm whatever the preconditioner
        let dnorm = |v: &[f64]| v.iter().zip(&self.inv_diag).map(|(x, d)| x * x * d).sum::<f64>().sqrt();
        let norm_b = dnorm(&b);
        let limit = self.cfg.iteration_limit(n);

        let mut x = vec![Dd::ZERO; n];
        let mut r = b;
        let mut used = 0;
        let mut rel = 1.0;
        for _ in 0..MAX_REFINEMENTS {
            let within_tol = rel <= self.cfg.rel_tol;
            let (delta, its, converged) = pcg(&sys.lu, &r, &self.precond, self.cfg.rel_tol, limit - used);
            used += its;
            let mut biggest = 0.0f64;
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi = xi.add_f64(*di);
                biggest = biggest.max(di.abs());
            }
            r = flux_residual(sys, li, &x);
            rel = dnorm(&r) / norm_b;
            if !converged {
                return Err(SolverError::ConvergenceFailure { label, iterations: used, residual: rel });
            }
            if within_tol && biggest <= CORRECTION_TOL {
                let values = x.iter().map(|v| v.hi).collect();
                return Ok(LabelSolution { label, values, iterations: used, residual: rel });
            }
        }
        Err(SolverError::ConvergenceFailure { label, iterations: used, residual: rel })
    }
}

/// Refinement sweeps before giving up.
const MAX_REFINEMENTS: usize = 40;
/// A correction this small (probabilities are in `[0, 1]`) from an
/// already-converged residual ends refinement.
const CORRECTION_TOL: f64 = 1e-12;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    fn normalize(hi: f64, lo: f64) -> Dd {
        let (h, l) = two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        Dd::normalize(s, e + self.lo + o.lo)
    }

    #[inline]
    fn add_f64(self, v: f64) -> Dd {
        let (s, e) = two_sum(self.hi, v);
        Dd::normalize(s, e + self.lo)
    }

    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    #[inline]
    fn scale(self, w: f64) -> Dd {
        let p = self.hi * w;
        let e = self.hi.mul_add(w, -p);
        Dd::normalize(p, e + self.lo * w)
    }
}

/// `b - L_U x` written as a sum of edge fluxes `w (x_neighbour - x_node)`.
fn flux_residual(sys: &DirichletSystem<'_>, label_index: usize, x: &[Dd]) -> Vec<f64> {
    sys.unseeded
        .iter()
        .enumerate()
        .map(|(u, &node)| {
            let xu = x[u];
            let mut acc = Dd::ZERO;
            for &(nb, w) in sys.graph.neighbors(node) {
                let other = match sys.slots[nb] {
                    Slot::Unseeded(v) => x[v],
                    Slot::Seeded { label, .. } => Dd { hi: if label == label_index { 1.0 } else { 0.0 }, lo: 0.0 },
                };
                acc = acc.add(other.sub(xu).scale(w));
            }
            acc.hi + acc.lo
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG from a zero start. Stops when the preconditioned
/// residual norm drops below `rel_tol` times that of `b`, on breakdown, or
/// after `limit` iterations. Returns the iterate, the iteration count and
/// whether it stopped before the limit.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn pcg(a: &CsrMatrix, b: &[f64], m: &Precond, rel_tol: f64, limit: usize) -> (Vec<f64>, usize, bool) {
    let n = b.len();
    let mut x = vec![0.0; n];
    if b.iter().all(|&v| v == 0.0) {
        return (x, 0, true);
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = rel_tol * rz.sqrt();

    for it in 1..=limit {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !rz.is_finite() {
            return (x, it, true);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !(rz_new > 0.0) || rz_new.sqrt() <= target {
            return (x, it, true);
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, limit, false)
}

/// Solves every label but the one with the largest id, which is recovered as
/// one minus the rest. Per-label solves run in parallel on the current rayon
/// pool.
pub fn solve_all(sys: &DirichletSystem<'_>, cfg: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    cfg.validate()?;
    let m = sys.label_ids.len();
    let n = sys.graph.n_nodes();
    if m > 1 {
        sys.check_seeded()?;
    }
    let prepared = Prepared::new(sys, cfg);
    // label ids are ascending, so the closure label is the last one
    let solved: Vec<LabelSolution> =
        sys.label_ids[..m - 1].par_iter().map(|&l| prepared.solve(l)).collect::<Result<_, _>>()?;

    let mut values = vec![0.0; n * m];
    for (node, slot) in sys.slots.iter().enumerate() {
        let row = &mut values[node * m..(node + 1) * m];
        match *slot {
            Slot::Seeded { label, .. } => row[label] = 1.0,
            Slot::Unseeded(u) => {
                let mut acc = 0.0;
                for (l, sol) in solved.iter().enumerate() {
                    row[l] = sol.values[u];
                    acc += sol.values[u];
                }
                row[m - 1] = 1.0 - acc;
            }
        }
    }

    let mut renormalized = 0;
    for node in 0..n {
        let row = &mut values[node * m..(node + 1) * m];
        if let Some(&v) = row.iter().find(|&&v| !(-HARD_VIOLATION..=1.0 + HARD_VIOLATION).contains(&v)) {
            return Err(SolverError::ProbabilityOutOfRange { node, value: v });
        }
        if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            for v in row.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_EPS {
                for v in row.iter_mut() {
                    *v /= sum;
                }
                renormalized += 1;
            }
        }
    }
    if renormalized > 0 {
        warn!("{renormalized} nodes drifted off the probability simplex and were renormalised");
    }

    let mut stats: Vec<LabelStats> = solved
        .iter()
        .map(|s| LabelStats { label: s.label, solved: true, iterations: s.iterations, residual: s.residual })
        .collect();
    stats.push(LabelStats { label: sys.label_ids[m - 1], solved: false, iterations: 0, residual: 0.0 });
    for s in &stats {
        debug!("label {}: {} iterations, residual {:e}", s.label, s.iterations, s.residual);
    }
    Ok(SolveOutcome { field: ProbabilityField { label_ids: sys.label_ids.clone(), values }, stats, renormalized })
}

/// Dense reference solution by Gaussian elimination on the weighted graph.
///
/// Unseeded nodes are eliminated in order; each elimination folds the node's
/// edges into its neighbours (`w_jk += w_ij w_ik / d_i`) and its seed
/// couplings into theirs. Every update adds nonnegative terms, so the
/// factorisation involves no cancellation. Intended as a test oracle.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn dense_reference_solve(sys: &DirichletSystem<'_>) -> Result<ProbabilityField, SolverError> {
    let n = sys.unseeded.len();
    if n > DENSE_LIMIT {
        return Err(SolverError::TooLarge { size: n, limit: DENSE_LIMIT });
    }
    let m = sys.label_ids.len();
    let graph = sys.graph;
    let mut w = vec![0.0f64; n * n];
    let mut c = vec![0.0f64; n * m];
    for (u, &node) in sys.unseeded.iter().enumerate() {
        for &(nb, wt) in graph.neighbors(node) {
            match sys.slots[nb] {
                Slot::Unseeded(v) => w[u * n + v] += wt,
                Slot::Seeded { label, .. } => c[u * m + label] += wt,
            }
        }
    }

    let mut d = vec![0.0f64; n];
    let mut nz = Vec::with_capacity(n);
    for k in 0..n {
        let dk: f64 = w[k * n + k + 1..(k + 1) * n].iter().sum::<f64>() + c[k * m..(k + 1) * m].iter().sum::<f64>();
        if !(dk > 0.0) {
            let comp = sys.components.ids[sys.unseeded[k]];
            return Err(SolverError::SeedlessComponent {
                component: comp,
                size: sys.components.sizes[comp],
                first_node: sys.unseeded[k],
            });
        }
        d[k] = dk;
        nz.clear();
        nz.extend((k + 1..n).filter(|&j| w[k * n + j] > 0.0));
        for &i in &nz {
            let f = w[i * n + k] / dk;
            for &j in &nz {
                if j != i {
                    w[i * n + j] += f * w[k * n + j];
                }
            }
            for l in 0..m {
                c[i * m + l] += f * c[k * m + l];
            }
        }
    }

    let mut x = vec![0.0f64; n * m];
    for k in (0..n).rev() {
        for l in 0..m {
            let mut acc = c[k * m + l];
            for j in k + 1..n {
                let wkj = w[k * n + j];
                if wkj > 0.0 {
                    acc += wkj * x[j * m + l];
                }
            }
            x[k * m + l] = acc / d[k];
        }
    }

    let mut values = vec![0.0; graph.n_nodes() * m];
    for (node, slot) in sys.slots.iter().enumerate() {
        let row = &mut values[node * m..(node + 1) * m];
        match *slot {
            Slot::Seeded { label, .. } => row[label] = 1.0,
            Slot::Unseeded(u) => row.copy_from_slice(&x[u * m..(u + 1) * m]),
        }
    }
    Ok(ProbabilityField { label_ids: sys.label_ids.clone(), values })
}
