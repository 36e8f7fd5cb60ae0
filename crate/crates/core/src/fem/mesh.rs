use serde::{Deserialize, Serialize};

use super::FemError;

/// Per-element geometric data of a linear triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// `area * grad(N_i) . grad(N_j)`, the unit-coefficient stiffness.
    pub stiffness: [[f64; 3]; 3],
    pub centroid: [f64; 2],
}

impl ElementGeometry {
    fn new(p: [[f64; 2]; 3]) -> Result<Self, FemError> {
        let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if !(twice_area > 0.0) {
            return Err(FemError::Mesh(format!(
                "element with non-positive area {}",
                0.5 * twice_area
            )));
        }
        let area = 0.5 * twice_area;
        let mut grad = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            grad[i] = [
                (p[j][1] - p[k][1]) / twice_area,
                (p[k][0] - p[j][0]) / twice_area,
            ];
        }
        let mut stiffness = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                stiffness[i][j] = area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
            }
        }
        Ok(ElementGeometry {
            area,
            stiffness,
            centroid: [
                (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                (p[0][1] + p[1][1] + p[2][1]) / 3.0,
            ],
        })
    }
}

/// Mesh dimensions; `nx` nodes along x₁ and `ny` along x₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
}

impl MeshSpec {
    /// 10 x 8 nodes on a 0.5 m x 0.06 m wall section: 80 nodes, 126 triangles.
    pub const WALL: MeshSpec = MeshSpec {
        width: 0.5,
        height: 0.06,
        nx: 10,
        ny: 8,
    };
}

/// Structured triangulation of a rectangle `[0, width] x [0, height]`.
///
/// Nodes are numbered with x₂ running fastest, which keeps the half
/// bandwidth of the assembled operators at `ny + 1` nodes. Every cell is cut
/// along its rising diagonal. The left edge (x₁ = 0) is the exterior
/// boundary, the right edge the interior one; top and bottom are insulated.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub spec: MeshSpec,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub geometry: Vec<ElementGeometry>,
    pub dirichlet_left: Vec<usize>,
    pub dirichlet_right: Vec<usize>,
}

pub fn build_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh, FemError> {
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(FemError::Mesh(format!("degenerate domain {width} x {height}")));
    }
    if nx < 2 || ny < 2 {
        return Err(FemError::Mesh(format!("need at least 2x2 nodes, got {nx}x{ny}")));
    }
    let id = |i: usize, j: usize| i * ny + j;
    let mut nodes = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            nodes.push([
                width * i as f64 / (nx - 1) as f64,
                height * j as f64 / (ny - 1) as f64,
            ]);
        }
    }
    let mut elements = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            elements.push([n00, n10, n11]);
            elements.push([n00, n11, n01]);
        }
    }
    let geometry = elements
        .iter()
        .map(|e| ElementGeometry::new([nodes[e[0]], nodes[e[1]], nodes[e[2]]]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Mesh {
        spec: MeshSpec {
            width,
            height,
            nx,
            ny,
        },
        nodes,
        elements,
        geometry,
        dirichlet_left: (0..ny).map(|j| id(0, j)).collect(),
        dirichlet_right: (0..ny).map(|j| id(nx - 1, j)).collect(),
    })
}

impl Mesh {
    pub fn from_spec(spec: &MeshSpec) -> Result<Mesh, FemError> {
        build_mesh(spec.width, spec.height, spec.nx, spec.ny)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        self.geometry.iter().map(|g| g.centroid).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Largest node-index distance inside one element.
    pub fn node_bandwidth(&self) -> usize {
        self.elements
            .iter()
            .map(|e| {
                let max = e.iter().max().unwrap();
                let min = e.iter().min().unwrap();
                max - min
            })
            .max()
            .unwrap_or(0)
    }

    /// Containing element and barycentric weights of `x`, if inside the domain.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        let MeshSpec { width, height, nx, ny } = self.spec;
        if x[0] < -tol * width
            || x[0] > width * (1.0 + tol)
            || x[1] < -tol * height
            || x[1] > height * (1.0 + tol)
        {
            return None;
        }
        let ci = ((x[0] / width * (nx - 1) as f64).floor().max(0.0) as usize).min(nx - 2);
        let cj = ((x[1] / height * (ny - 1) as f64).floor().max(0.0) as usize).min(ny - 2);
        let first = 2 * (ci * (ny - 1) + cj);
        let mut best = None;
        let mut best_min = f64::NEG_INFINITY;
        for e in [first, first + 1] {
            let w = self.barycentric(e, x);
            let m = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if m > best_min {
                best_min = m;
                best = Some((e, w));
            }
        }
        best.filter(|_| best_min >= -1e-9)
    }

    pub fn barycentric(&self, element: usize, x: [f64; 2]) -> [f64; 3] {
        let e = self.elements[element];
        let p = [self.nodes[e[0]], self.nodes[e[1]], self.nodes[e[2]]];
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
        let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Node closest to `x` (lowest index on ties).
    pub fn nearest_node(&self, x: [f64; 2]) -> usize {
        let d = |n: &[f64; 2]| (n[0] - x[0]).powi(2) + (n[1] - x[1]).powi(2);
        (0..self.nodes.len())
            .min_by(|&a, &b| d(&self.nodes[a]).total_cmp(&d(&self.nodes[b])))
            .unwrap_or(0)
    }
}
