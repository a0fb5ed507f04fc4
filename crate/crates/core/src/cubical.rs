//! Sublevel cubical persistence of a 2D scalar grid.
//!
//! Pixels are the top-dimensional cells (squares) of a cubical complex laid
//! out on a doubled-coordinate grid of `(2W+1) x (2H+1)` cells. A cell at
//! `(x, y)` has one unit of extent along every odd coordinate, so its
//! dimension is the number of odd coordinates. Every edge and vertex takes
//! the minimum value of the squares incident to it.
//!
//! Cells are processed in the total order (value, dimension, linear index).
//! Dimension 0 is computed with a union-find sweep over vertices and edges.
//! Dimension 1 is computed with a union-find sweep over squares and edges
//! in reverse order, on the dual graph whose extra node is the exterior of
//! the rectangle: an edge that merges two dual components kills the loop
//! born at that edge, and the younger component's square is the one that
//! fills it.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::image::ChannelGrid;

mod oracle;

pub use oracle::oracle_persistence;

/// Filtration values of every cell of the cubical complex of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicalFiltration {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl CubicalFiltration {
    /// Pixel width of the source grid.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of cell columns in doubled coordinates, `2W + 1`.
    pub fn cols(&self) -> usize {
        2 * self.width + 1
    }

    /// Number of cell rows in doubled coordinates, `2H + 1`.
    pub fn rows(&self) -> usize {
        2 * self.height + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.cols(), cell / self.cols())
    }

    pub fn cell_at(&self, x: usize, y: usize) -> usize {
        y * self.cols() + x
    }

    pub fn dim(&self, cell: usize) -> u8 {
        let (x, y) = self.coords(cell);
        (x & 1) as u8 + (y & 1) as u8
    }

    /// Codimension-one faces of a cell.
    pub fn faces(&self, cell: usize) -> Vec<usize> {
        let (x, y) = self.coords(cell);
        let mut out = Vec::with_capacity(4);
        if x & 1 == 1 {
            out.push(self.cell_at(x - 1, y));
            out.push(self.cell_at(x + 1, y));
        }
        if y & 1 == 1 {
            out.push(self.cell_at(x, y - 1));
            out.push(self.cell_at(x, y + 1));
        }
        out
    }

    /// Codimension-one cofaces of a cell.
    pub fn cofaces(&self, cell: usize) -> Vec<usize> {
        let (x, y) = self.coords(cell);
        let mut out = Vec::with_capacity(4);
        if x & 1 == 0 {
            if x > 0 {
                out.push(self.cell_at(x - 1, y));
            }
            if x + 1 < self.cols() {
                out.push(self.cell_at(x + 1, y));
            }
        }
        if y & 1 == 0 {
            if y > 0 {
                out.push(self.cell_at(x, y - 1));
            }
            if y + 1 < self.rows() {
                out.push(self.cell_at(x, y + 1));
            }
        }
        out
    }

    /// Cell indices sorted by (value, dimension, linear index).
    fn sorted_cells(&self) -> Vec<u32> {
        let mut levels: Vec<f64> = self.values.clone();
        levels.sort_unstable_by(f64::total_cmp);
        levels.dedup();
        let mut keys: Vec<u64> = self
            .values
            .iter()
            .enumerate()
            .map(|(cell, v)| {
                let rank = levels
                    .binary_search_by(|probe| probe.total_cmp(v))
                    .expect("every value is a level") as u64;
                (rank << 34) | ((self.dim(cell) as u64) << 32) | cell as u64
            })
            .collect();
        keys.sort_unstable();
        keys.into_iter().map(|k| k as u32).collect()
    }
}

/// Builds the T-construction filtration: squares carry the pixel values,
/// lower cells the minimum over their incident squares.
pub fn build_filtration(ch: &ChannelGrid) -> CubicalFiltration {
    let (w, h) = (ch.width(), ch.height());
    let cols = 2 * w + 1;
    let rows = 2 * h + 1;
    assert!(
        cols * rows < (1usize << 32),
        "grid of {w}x{h} pixels is too large for 32-bit cell indices"
    );
    let mut values = vec![f64::INFINITY; cols * rows];
    for py in 0..h {
        for px in 0..w {
            let v = ch.get(px, py);
            let (cx, cy) = (2 * px + 1, 2 * py + 1);
            for y in cy - 1..=cy + 1 {
                let row = &mut values[y * cols..(y + 1) * cols];
                for slot in &mut row[cx - 1..=cx + 1] {
                    if v < *slot {
                        *slot = v;
                    }
                }
            }
        }
    }
    CubicalFiltration {
        width: w,
        height: h,
        values,
    }
}

/// Death value of a persistence pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Death {
    Finite(f64),
    Essential,
}

impl Death {
    pub fn finite(self) -> Option<f64> {
        match self {
            Death::Finite(d) => Some(d),
            Death::Essential => None,
        }
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Death::Finite(a), Death::Finite(b)) => a.total_cmp(b),
            (Death::Finite(_), Death::Essential) => Ordering::Less,
            (Death::Essential, Death::Finite(_)) => Ordering::Greater,
            (Death::Essential, Death::Essential) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Death {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Death::Finite(d) => write!(f, "{d}"),
            Death::Essential => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub dim: u8,
    pub birth: f64,
    pub death: Death,
}

impl PersistencePair {
    pub fn finite(dim: u8, birth: f64, death: f64) -> Self {
        Self {
            dim,
            birth,
            death: Death::Finite(death),
        }
    }

    pub fn essential(dim: u8, birth: f64) -> Self {
        Self {
            dim,
            birth,
            death: Death::Essential,
        }
    }

    /// `death - birth`, infinite for essential pairs.
    pub fn persistence(&self) -> f64 {
        match self.death {
            Death::Finite(d) => d - self.birth,
            Death::Essential => f64::INFINITY,
        }
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then_with(|| self.birth.total_cmp(&other.birth))
            .then_with(|| self.death.total_cmp(&other.death))
    }
}

/// Multiset of persistence pairs. Equality is multiset equality.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn new(pairs: Vec<PersistencePair>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[PersistencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn in_dim(&self, dim: u8) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |p| p.dim == dim)
    }

    /// Pairs of dimension `dim` with nonzero persistence (essential ones
    /// included), in canonical order.
    pub fn persistent(&self, dim: u8) -> Vec<PersistencePair> {
        let mut out: Vec<_> = self
            .in_dim(dim)
            .filter(|p| p.persistence() > 0.0)
            .copied()
            .collect();
        out.sort_by(PersistencePair::total_cmp);
        out
    }

    pub fn essential_count(&self, dim: u8) -> usize {
        self.in_dim(dim)
            .filter(|p| p.death == Death::Essential)
            .count()
    }

    /// Pairs sorted by (dim, birth, death).
    pub fn canonical(&self) -> Vec<PersistencePair> {
        let mut out = self.pairs.clone();
        out.sort_by(PersistencePair::total_cmp);
        out
    }

    /// Rendering as CSV `dim,birth,death` with `inf` for essential deaths.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,birth,death\n");
        for p in self.canonical() {
            out.push_str(&format!("{},{},{}\n", p.dim, p.birth, p.death));
        }
        out
    }
}

impl PartialEq for PersistenceDiagram {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (self.canonical(), other.canonical());
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.total_cmp(y) == Ordering::Equal)
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}

/// Persistence pairs of dimensions 0 and 1, zero-persistence pairs included.
pub fn compute_persistence(f: &CubicalFiltration) -> PersistenceDiagram {
    let order = f.sorted_cells();
    let n = f.len();
    let cols = f.cols();
    let rows = f.rows();
    let exterior = n as u32;

    let mut position = vec![0u32; n + 1];
    for (i, &c) in order.iter().enumerate() {
        position[c as usize] = i as u32;
    }
    position[n] = u32::MAX;

    // Each root is the oldest element of its component in sweep order.
    let mut parent: Vec<u32> = (0..=n as u32).collect();
    let mut pairs = Vec::new();

    for &c in &order {
        let cell = c as usize;
        let (x, y) = (cell % cols, cell / cols);
        let (a, b) = match (x & 1, y & 1) {
            (0, 1) => (cell - cols, cell + cols),
            (1, 0) => (cell - 1, cell + 1),
            _ => continue,
        };
        let (ra, rb) = (find(&mut parent, a as u32), find(&mut parent, b as u32));
        if ra != rb {
            let (young, old) = if position[ra as usize] > position[rb as usize] {
                (ra, rb)
            } else {
                (rb, ra)
            };
            parent[young as usize] = old;
            pairs.push(PersistencePair::finite(
                0,
                f.values[young as usize],
                f.values[cell],
            ));
        }
    }
    let first_vertex = *order
        .iter()
        .find(|&&c| f.dim(c as usize) == 0)
        .expect("a nonempty complex has vertices");
    pairs.push(PersistencePair::essential(
        0,
        f.values[first_vertex as usize],
    ));

    for &c in order.iter().rev() {
        let cell = c as usize;
        let (x, y) = (cell % cols, cell / cols);
        let (a, b) = match (x & 1, y & 1) {
            (0, 1) => (
                if x > 0 { c - 1 } else { exterior },
                if x + 1 < cols { c + 1 } else { exterior },
            ),
            (1, 0) => (
                if y > 0 { c - cols as u32 } else { exterior },
                if y + 1 < rows {
                    c + cols as u32
                } else {
                    exterior
                },
            ),
            _ => continue,
        };
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            // Oldest in the reverse sweep is the latest in filtration order.
            let (young, old) = if position[ra as usize] < position[rb as usize] {
                (ra, rb)
            } else {
                (rb, ra)
            };
            parent[young as usize] = old;
            pairs.push(PersistencePair::finite(
                1,
                f.values[cell],
                f.values[young as usize],
            ));
        }
    }

    PersistenceDiagram { pairs }
}
