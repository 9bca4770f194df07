//! Uniform rectangular partitions of a box and edge-based degree of freedom
//! numbering.
//!
//! Elements are numbered row-major (`e = j * nx + i`). Velocity degrees of
//! freedom live on edges: the `(nx + 1) * ny` vertical edges come first,
//! row-major, followed by the `nx * (ny + 1)` horizontal edges. Vertical
//! edges carry the global normal `+x`, horizontal edges `+y`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RectMesh<T> {
    pub nx: usize,
    pub ny: usize,
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
    pub hx: T,
    pub hy: T,
    /// Element diameter `sqrt(hx² + hy²)`.
    pub h: T,
}

/// Local edge slots of an element, in the order used by every per-element
/// array in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalEdge {
    Left = 0,
    Right = 1,
    Bottom = 2,
    Top = 3,
}

impl LocalEdge {
    pub const ALL: [LocalEdge; 4] = [
        LocalEdge::Left,
        LocalEdge::Right,
        LocalEdge::Bottom,
        LocalEdge::Top,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::InvalidLocalEdge(i))
    }

    /// Sign of the global edge normal relative to the element's outward normal.
    pub fn outward_sign(self) -> i8 {
        match self {
            LocalEdge::Left | LocalEdge::Bottom => -1,
            LocalEdge::Right | LocalEdge::Top => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Edge parallel to the y axis, normal `+x`.
    Vertical,
    /// Edge parallel to the x axis, normal `+y`.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Pressure boundary Γ_D where `∇·u = 0`; no essential velocity constraint.
    DirichletP,
    /// Rigid boundary Γ_N where `u·ν = 0`; the edge dof is eliminated.
    NeumannU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryPartition {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl BoundaryPartition {
    pub fn uniform(tag: BoundaryTag) -> Self {
        Self {
            left: tag,
            right: tag,
            bottom: tag,
            top: tag,
        }
    }

    pub fn all_neumann() -> Self {
        Self::uniform(BoundaryTag::NeumannU)
    }

    pub fn all_dirichlet() -> Self {
        Self::uniform(BoundaryTag::DirichletP)
    }

    pub fn tag(&self, side: Side) -> BoundaryTag {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Interior,
    DirichletBoundary,
    NeumannBoundary,
}

/// Edge classes plus the map between global edges and free velocity dofs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    pub classes: Vec<EdgeClass>,
    free_of_edge: Vec<Option<usize>>,
    free_edges: Vec<usize>,
}

impl DofMap {
    pub fn num_edges(&self) -> usize {
        self.classes.len()
    }

    pub fn num_free(&self) -> usize {
        self.free_edges.len()
    }

    /// Free dof index of a global edge, `None` for constrained edges.
    pub fn free_index(&self, edge: usize) -> Option<usize> {
        self.free_of_edge[edge]
    }

    pub fn free_edges(&self) -> &[usize] {
        &self.free_edges
    }

    pub fn is_constrained(&self, edge: usize) -> bool {
        self.free_of_edge[edge].is_none()
    }

    pub fn count(&self, class: EdgeClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Scatters a free-dof vector into a full edge vector (zeros on Γ_N).
    pub fn expand<T: Scalar>(&self, free: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.num_edges()];
        for (k, &e) in self.free_edges.iter().enumerate() {
            full[e] = free[k];
        }
        full
    }

    pub fn restrict<T: Scalar>(&self, full: &[T]) -> Vec<T> {
        self.free_edges.iter().map(|&e| full[e]).collect()
    }
}

impl<T: Scalar> RectMesh<T> {
    /// Uniform `nx × ny` partition of `[x0, x1] × [y0, y1]`.
    pub fn new(nx: usize, ny: usize, extents: [T; 4]) -> Result<Self> {
        let [x0, x1, y0, y1] = extents;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!(
                "element counts must be positive, got {nx} x {ny}"
            )));
        }
        if !(x1 > x0) || !(y1 > y0) || !(x1 - x0).is_finite() || !(y1 - y0).is_finite() {
            return Err(Error::InvalidMesh(format!(
                "degenerate extents [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        let hx = (x1 - x0) / T::of_usize(nx);
        let hy = (y1 - y0) / T::of_usize(ny);
        Ok(Self {
            nx,
            ny,
            x0,
            x1,
            y0,
            y1,
            hx,
            hy,
            h: (hx * hx + hy * hy).sqrt(),
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, [T::zero(), T::one(), T::zero(), T::one()])
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_vertical_edges(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn num_horizontal_edges(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn num_edges(&self) -> usize {
        self.num_vertical_edges() + self.num_horizontal_edges()
    }

    pub fn element_area(&self) -> T {
        self.hx * self.hy
    }

    /// `(i, j)` grid position of an element.
    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Lower-left corner of an element.
    pub fn element_origin(&self, e: usize) -> (T, T) {
        let (i, j) = self.element_ij(e);
        (
            self.x0 + T::of_usize(i) * self.hx,
            self.y0 + T::of_usize(j) * self.hy,
        )
    }

    pub fn element_centroid(&self, e: usize) -> (T, T) {
        let (xa, ya) = self.element_origin(e);
        let half = T::of(0.5);
        (xa + half * self.hx, ya + half * self.hy)
    }

    pub fn vertical_edge(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn horizontal_edge(&self, i: usize, j: usize) -> usize {
        self.num_vertical_edges() + j * self.nx + i
    }

    /// Global edges of an element in [`LocalEdge`] order.
    pub fn element_edges(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(e);
        [
            self.vertical_edge(i, j),
            self.vertical_edge(i + 1, j),
            self.horizontal_edge(i, j),
            self.horizontal_edge(i, j + 1),
        ]
    }

    pub fn edge_orientation(&self, edge: usize) -> Orientation {
        if edge < self.num_vertical_edges() {
            Orientation::Vertical
        } else {
            Orientation::Horizontal
        }
    }

    /// `(i, j)` grid position of an edge within its orientation family.
    pub fn edge_ij(&self, edge: usize) -> (usize, usize) {
        match self.edge_orientation(edge) {
            Orientation::Vertical => (edge % (self.nx + 1), edge / (self.nx + 1)),
            Orientation::Horizontal => {
                let k = edge - self.num_vertical_edges();
                (k % self.nx, k / self.nx)
            }
        }
    }

    /// Endpoints of an edge, traversed in the increasing coordinate direction.
    pub fn edge_endpoints(&self, edge: usize) -> ((T, T), (T, T)) {
        let (i, j) = self.edge_ij(edge);
        let x = self.x0 + T::of_usize(i) * self.hx;
        let y = self.y0 + T::of_usize(j) * self.hy;
        match self.edge_orientation(edge) {
            Orientation::Vertical => ((x, y), (x, y + self.hy)),
            Orientation::Horizontal => ((x, y), (x + self.hx, y)),
        }
    }

    pub fn edge_length(&self, edge: usize) -> T {
        match self.edge_orientation(edge) {
            Orientation::Vertical => self.hy,
            Orientation::Horizontal => self.hx,
        }
    }

    /// Elements on the negative and positive side of the edge normal.
    pub fn edge_elements(&self, edge: usize) -> [Option<usize>; 2] {
        let (i, j) = self.edge_ij(edge);
        match self.edge_orientation(edge) {
            Orientation::Vertical => [
                (i > 0).then(|| j * self.nx + i - 1),
                (i < self.nx).then(|| j * self.nx + i),
            ],
            Orientation::Horizontal => [
                (j > 0).then(|| (j - 1) * self.nx + i),
                (j < self.ny).then(|| j * self.nx + i),
            ],
        }
    }

    /// Box side an edge lies on, if it is a boundary edge.
    pub fn edge_side(&self, edge: usize) -> Option<Side> {
        let (i, j) = self.edge_ij(edge);
        match self.edge_orientation(edge) {
            Orientation::Vertical if i == 0 => Some(Side::Left),
            Orientation::Vertical if i == self.nx => Some(Side::Right),
            Orientation::Horizontal if j == 0 => Some(Side::Bottom),
            Orientation::Horizontal if j == self.ny => Some(Side::Top),
            _ => None,
        }
    }

    /// Labels every edge and numbers the free velocity dofs in global edge order.
    pub fn classify_edges(&self, bc: &BoundaryPartition) -> DofMap {
        let n = self.num_edges();
        let mut classes = Vec::with_capacity(n);
        let mut free_of_edge = Vec::with_capacity(n);
        let mut free_edges = Vec::new();
        for edge in 0..n {
            let class = match self.edge_side(edge) {
                None => EdgeClass::Interior,
                Some(side) => match bc.tag(side) {
                    BoundaryTag::DirichletP => EdgeClass::DirichletBoundary,
                    BoundaryTag::NeumannU => EdgeClass::NeumannBoundary,
                },
            };
            classes.push(class);
            if class == EdgeClass::NeumannBoundary {
                free_of_edge.push(None);
            } else {
                free_of_edge.push(Some(free_edges.len()));
                free_edges.push(edge);
            }
        }
        DofMap {
            classes,
            free_of_edge,
            free_edges,
        }
    }

    /// Same partition with twice as many elements per axis.
    pub fn refined(&self) -> Self {
        Self::new(
            2 * self.nx,
            2 * self.ny,
            [self.x0, self.x1, self.y0, self.y1],
        )
        .expect("refining a valid mesh stays valid")
    }

    pub fn contains(&self, e: usize, x: T, y: T) -> bool {
        let (xa, ya) = self.element_origin(e);
        // small slack for points produced by floating point arithmetic on edges
        let tol = T::of(1e-12).max(T::epsilon() * T::of(16.0));
        let sx = tol * self.hx;
        let sy = tol * self.hy;
        x >= xa - sx && x <= xa + self.hx + sx && y >= ya - sy && y <= ya + self.hy + sy
    }
}

/// Free-function form of [`RectMesh::new`].
pub fn build_rect_mesh<T: Scalar>(nx: usize, ny: usize, extents: [T; 4]) -> Result<RectMesh<T>> {
    RectMesh::new(nx, ny, extents)
}

/// Free-function form of [`RectMesh::classify_edges`].
pub fn edge_classify<T: Scalar>(mesh: &RectMesh<T>, bc: &BoundaryPartition) -> DofMap {
    mesh.classify_edges(bc)
}
