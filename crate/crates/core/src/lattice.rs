//! 6-connected weighted graph over the voxels of a region of interest.
//!
//! Edge weights follow the Gaussian intensity affinity
//! `w = exp(-beta * (g_i - g_j)^2)`, floored at [`WEIGHT_FLOOR`].

use std::collections::VecDeque;

use thiserror::Error;

use crate::volume::{Geometry, IntensityVolume, MaskVolume, VolumeError};

/// Smallest edge weight; keeps strongly contrasted neighbours numerically
/// connected.
pub const WEIGHT_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("non-finite input to edge weight (g_i = {gi}, g_j = {gj}, beta = {beta})")]
    NonFiniteInput { gi: f64, gj: f64, beta: f64 },
    #[error("beta must be finite and nonnegative, got {0}")]
    InvalidBeta(f64),
    #[error("region of interest is empty")]
    EmptyRoi,
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub fn edge_weight(gi: f64, gj: f64, beta: f64) -> Result<f64, LatticeError> {
    if !(gi.is_finite() && gj.is_finite() && beta.is_finite()) {
        return Err(LatticeError::NonFiniteInput { gi, gj, beta });
    }
    if beta < 0.0 {
        return Err(LatticeError::InvalidBeta(beta));
    }
    let d = gi - gj;
    Ok((-beta * d * d).exp().max(WEIGHT_FLOOR))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected graph whose nodes are roi voxels, numbered densely in x-fastest
/// voxel order. Each neighbouring pair is stored once with `a < b`.
#[derive(Debug, Clone)]
pub struct LatticeGraph {
    geometry: Geometry,
    beta: f64,
    node_voxel: Vec<usize>,
    voxel_node: Vec<Option<usize>>,
    edges: Vec<Edge>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

pub fn build_lattice(g: &IntensityVolume, roi: &MaskVolume, beta: f64) -> Result<LatticeGraph, LatticeError> {
    g.check_same_dims(roi)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(LatticeError::InvalidBeta(beta));
    }
    let geometry = *g.geometry();
    let [nx, ny, nz] = geometry.dims();
    let mask = roi.data();
    let values = g.data();

    let mut node_voxel = Vec::new();
    let mut voxel_node = vec![None; mask.len()];
    for (idx, &inside) in mask.iter().enumerate() {
        if inside {
            voxel_node[idx] = Some(node_voxel.len());
            node_voxel.push(idx);
        }
    }
    if node_voxel.is_empty() {
        return Err(LatticeError::EmptyRoi);
    }

    let mut edges = Vec::new();
    for (a, &idx) in node_voxel.iter().enumerate() {
        let [x, y, z] = geometry.coords(idx);
        let forward = [(x + 1 < nx, 1), (y + 1 < ny, nx), (z + 1 < nz, nx * ny)];
        for (in_bounds, stride) in forward {
            if !in_bounds {
                continue;
            }
            if let Some(b) = voxel_node[idx + stride] {
                let weight = edge_weight(values[idx], values[idx + stride], beta)?;
                edges.push(Edge { a, b, weight });
            }
        }
    }

    let n = node_voxel.len();
    let mut degree = vec![0usize; n];
    for e in &edges {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    let mut adj_start = Vec::with_capacity(n + 1);
    adj_start.push(0);
    for d in &degree {
        adj_start.push(adj_start.last().unwrap() + d);
    }
    let mut fill = adj_start.clone();
    let mut adj = vec![(0usize, 0.0f64); adj_start[n]];
    for e in &edges {
        adj[fill[e.a]] = (e.b, e.weight);
        fill[e.a] += 1;
        adj[fill[e.b]] = (e.a, e.weight);
        fill[e.b] += 1;
    }
    // keep neighbour lists in ascending node order
    for i in 0..n {
        adj[adj_start[i]..adj_start[i + 1]].sort_by_key(|&(j, _)| j);
    }

    Ok(LatticeGraph { geometry, beta, node_voxel, voxel_node, edges, adj_start, adj })
}

impl LatticeGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_voxel.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn voxel_of(&self, node: usize) -> usize {
        self.node_voxel[node]
    }

    pub fn node_of(&self, voxel: usize) -> Option<usize> {
        self.voxel_node[voxel]
    }

    /// `(neighbour, weight)` pairs, ascending by neighbour.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_start[node]..self.adj_start[node + 1]]
    }

    /// Total incident weight.
    pub fn strength(&self, node: usize) -> f64 {
        self.neighbors(node).iter().map(|&(_, w)| w).sum()
    }
}

/// Connected-component labelling of a lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component id per node; ids are ordered by their smallest node id.
    pub ids: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn connected_components(graph: &LatticeGraph) -> Components {
    let n = graph.n_nodes();
    let mut ids = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if ids[start] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        ids[start] = c;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for &(j, _) in graph.neighbors(i) {
                if ids[j] == usize::MAX {
                    ids[j] = c;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    Components { ids, sizes }
}
