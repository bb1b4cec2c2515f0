//! Uniform triangulations of the unit square and the two P1 spaces built on them.

use crate::{Error, Result};

/// Structured triangulation of (0,1)²: an n×n grid of squares, each cut along
/// the diagonal from its lower-left to its upper-right corner.
///
/// Nodes are numbered lexicographically by (y, x): node `j*(n+1) + i` sits at
/// `(i/n, j/n)`. Triangles are stored counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    n: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
}

pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "mesh needs at least one subdivision per side".into(),
        ));
    }
    let side = n + 1;
    let hn = 1.0 / n as f64;
    let mut nodes = Vec::with_capacity(side * side);
    let mut boundary = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            nodes.push([i as f64 * hn, j as f64 * hn]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * side + i;
            let b = a + 1;
            let c = a + side;
            let d = c + 1;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    Ok(Mesh {
        n,
        nodes,
        triangles,
        boundary,
    })
}

impl Mesh {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Longest edge length, √2/n.
    pub fn h(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.n as f64
    }

    /// The refinement measure tabulated in convergence studies, h/√2 = 1/n.
    pub fn h_over_sqrt2(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area of triangle `t` (positive for counterclockwise storage).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.vertices(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    /// Triangle containing the point, with barycentric coordinates.
    /// Points on shared edges resolve to either neighbour.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 3])> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return None;
        }
        let n = self.n as f64;
        let i = ((x * n).floor() as usize).min(self.n - 1);
        let j = ((y * n).floor() as usize).min(self.n - 1);
        let u = x * n - i as f64;
        let v = y * n - j as f64;
        let cell = j * self.n + i;
        // lower triangle (a, b, d) when u >= v, upper (a, d, c) otherwise
        if u >= v {
            Some((2 * cell, [1.0 - u, u - v, v]))
        } else {
            Some((2 * cell + 1, [1.0 - v, u, v - u]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Continuous P1 functions vanishing on ∂Ω (V_h).
    DirichletP1,
    /// Continuous P1 functions without boundary constraint (X_h).
    FreeP1,
}

/// Degree-of-freedom numbering of a P1 space on a particular mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FeSpace {
    kind: SpaceKind,
    mesh_n: usize,
    dof_of_node: Vec<Option<usize>>,
    node_of_dof: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: &Mesh, kind: SpaceKind) -> Self {
        let mut dof_of_node = Vec::with_capacity(mesh.node_count());
        let mut node_of_dof = Vec::new();
        for (node, &on_boundary) in mesh.boundary_mask().iter().enumerate() {
            if kind == SpaceKind::DirichletP1 && on_boundary {
                dof_of_node.push(None);
            } else {
                dof_of_node.push(Some(node_of_dof.len()));
                node_of_dof.push(node);
            }
        }
        FeSpace {
            kind,
            mesh_n: mesh.n(),
            dof_of_node,
            node_of_dof,
        }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dof_count(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.node_of_dof[dof]
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_n == mesh.n() && self.dof_of_node.len() == mesh.node_count() {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Nodal vector over all mesh nodes, zero on nodes without a dof.
    pub fn to_nodal(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dof_of_node.len()];
        for (dof, &node) in self.node_of_dof.iter().enumerate() {
            out[node] = coeffs[dof];
        }
        out
    }

    /// Picks this space's dofs out of a nodal vector.
    pub fn from_nodal(&self, nodal: &[f64]) -> Vec<f64> {
        self.node_of_dof.iter().map(|&node| nodal[node]).collect()
    }
}
