//! Full-rank lattices `{A k : k in Z^l}`, hypercube windows and the
//! lexicographic order on integer coordinates.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Integer coordinates of a lattice point.
pub type Point = Vec<i64>;

const DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dim: usize,
    /// Row-major base matrix.
    base: Vec<f64>,
    inverse: Vec<f64>,
    delta: f64,
}

impl Lattice {
    /// Builds a lattice from a row-major `l x l` base matrix.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let l = rows.len();
        if l == 0 {
            return Err(Error::usage("base matrix is empty"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != l) {
            return Err(Error::Dimension {
                expected: l,
                got: r.len(),
            });
        }
        let base: Vec<f64> = rows.iter().flatten().copied().collect();
        if base.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("base matrix has non-finite entries"));
        }
        let m = DMatrix::from_row_slice(l, l, &base);
        let det = m.determinant();
        if !(det.abs() > DET_TOL) {
            return Err(Error::SingularLattice { det });
        }
        let inv = m
            .try_inverse()
            .ok_or(Error::SingularLattice { det })?;
        let inverse = (0..l).flat_map(|i| (0..l).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect();
        Ok(Self {
            dim: l,
            base,
            inverse,
            delta: det.abs(),
        })
    }

    /// The integer lattice `Z^l`.
    pub fn integer(l: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|i| (0..l).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(&rows).expect("identity is nonsingular")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Volume of the fundamental parallelepiped, `|det A|`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn base_rows(&self) -> Vec<Vec<f64>> {
        self.base.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// The lattice `2^-n L`. Scaling by a power of two is exact in floating
    /// point, so refinements compose exactly.
    pub fn refine(&self, n: u32) -> Self {
        let s = (0.5f64).powi(n as i32);
        let rows: Vec<Vec<f64>> = self
            .base_rows()
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * s).collect())
            .collect();
        let mut out = Self::new(&rows).expect("refinement of a nonsingular lattice");
        // keep delta consistent with the exact scaling
        out.delta = self.delta * s.powi(self.dim as i32);
        out
    }

    /// Embeds integer coordinates: `A k`.
    pub fn embed(&self, k: &[i64]) -> Vec<f64> {
        let l = self.dim;
        (0..l)
            .map(|i| (0..l).map(|j| self.base[i * l + j] * k[j] as f64).sum())
            .collect()
    }

    fn coordinate_bounds(&self, lo: f64, hi: f64) -> Vec<(i64, i64)> {
        // image of the box [lo, hi]^l under A^-1, widened to integers
        let l = self.dim;
        (0..l)
            .map(|i| {
                let row = &self.inverse[i * l..(i + 1) * l];
                let (mut a, mut b) = (0.0, 0.0);
                for &v in row {
                    a += (v * lo).min(v * hi);
                    b += (v * lo).max(v * hi);
                }
                ((a - 1e-9).floor() as i64, (b + 1e-9).ceil() as i64)
            })
            .collect()
    }
}

/// Shift-invariant lexicographic order on integer coordinates.
pub fn lex_compare(s: &[i64], t: &[i64]) -> Ordering {
    debug_assert_eq!(s.len(), t.len());
    s.cmp(t)
}

/// Finite set of lattice points with O(l) lookup by integer coordinates.
/// Points are stored in lexicographic order.
#[derive(Debug, Clone)]
pub struct Window {
    lattice: Arc<Lattice>,
    coords: Vec<i64>,
    embedded: Vec<f64>,
    lo: Vec<i64>,
    extent: Vec<usize>,
    table: Vec<u32>,
    origin: Option<usize>,
}

const EMPTY: u32 = u32::MAX;

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.coords == other.coords
    }
}

impl Window {
    /// Lattice points inside the centered cube `[-a, a]^l`.
    pub fn centered(lattice: Arc<Lattice>, a: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::usage(format!("window radius must be nonnegative, got {a}")));
        }
        Self::enumerate(lattice, -a, a)
    }

    /// Lattice points inside the block `[0, n]^l`.
    pub fn block(lattice: Arc<Lattice>, n: f64) -> Result<Self> {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(Error::usage(format!("block side must be nonnegative, got {n}")));
        }
        Self::enumerate(lattice, 0.0, n)
    }

    fn enumerate(lattice: Arc<Lattice>, lo: f64, hi: f64) -> Result<Self> {
        let l = lattice.dim();
        let bounds = lattice.coordinate_bounds(lo, hi);
        let tol = 1e-9 * hi.abs().max(lo.abs()).max(1.0);
        let mut points = Vec::new();
        let mut k: Vec<i64> = bounds.iter().map(|b| b.0).collect();
        'outer: loop {
            let x = lattice.embed(&k);
            if x.iter().all(|&v| v >= lo - tol && v <= hi + tol) {
                points.push(k.clone());
            }
            // odometer increment, last coordinate fastest: lexicographic order
            for i in (0..l).rev() {
                if k[i] < bounds[i].1 {
                    k[i] += 1;
                    continue 'outer;
                }
                k[i] = bounds[i].0;
            }
            break;
        }
        Self::from_points(lattice, points)
    }

    /// Window made of the given points (sorted and deduplicated).
    pub fn from_points(lattice: Arc<Lattice>, mut points: Vec<Point>) -> Result<Self> {
        let l = lattice.dim();
        if let Some(p) = points.iter().find(|p| p.len() != l) {
            return Err(Error::Dimension {
                expected: l,
                got: p.len(),
            });
        }
        points.sort();
        points.dedup();
        let lo: Vec<i64> = (0..l)
            .map(|i| points.iter().map(|p| p[i]).min().unwrap_or(0))
            .collect();
        let extent: Vec<usize> = (0..l)
            .map(|i| {
                let hi = points.iter().map(|p| p[i]).max().unwrap_or(-1);
                (hi - lo[i] + 1).max(0) as usize
            })
            .collect();
        let cells: usize = extent.iter().product();
        if cells > 50_000_000 {
            return Err(Error::usage("window bounding box too large"));
        }
        let mut table = vec![EMPTY; cells];
        let mut coords = Vec::with_capacity(points.len() * l);
        let mut embedded = Vec::with_capacity(points.len() * l);
        let mut origin = None;
        for (idx, p) in points.iter().enumerate() {
            let mut cell = 0usize;
            for i in 0..l {
                cell = cell * extent[i] + (p[i] - lo[i]) as usize;
            }
            table[cell] = idx as u32;
            if p.iter().all(|&c| c == 0) {
                origin = Some(idx);
            }
            coords.extend_from_slice(p);
            embedded.extend(lattice.embed(p));
        }
        Ok(Self {
            lattice,
            coords,
            embedded,
            lo,
            extent,
            table,
            origin,
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.lattice.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Integer coordinates of the `i`-th point.
    pub fn coord(&self, i: usize) -> &[i64] {
        let l = self.lattice.dim();
        &self.coords[i * l..(i + 1) * l]
    }

    /// Embedded point `A k` of the `i`-th point.
    pub fn embedded(&self, i: usize) -> &[f64] {
        let l = self.lattice.dim();
        &self.embedded[i * l..(i + 1) * l]
    }

    pub fn points(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.coords.chunks(self.lattice.dim())
    }

    pub fn origin_index(&self) -> Option<usize> {
        self.origin
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let mut cell = 0usize;
        for (i, &c) in k.iter().enumerate() {
            let off = c - self.lo[i];
            if off < 0 || off as usize >= self.extent[i] {
                return None;
            }
            cell = cell * self.extent[i] + off as usize;
        }
        match self.table[cell] {
            EMPTY => None,
            idx => Some(idx as usize),
        }
    }

    /// Index of `k - shift`, i.e. the point read by the shifted field `B^shift f` at `k`.
    pub fn index_of_shifted(&self, k: &[i64], shift: &[i64]) -> Option<usize> {
        let mut cell = 0usize;
        for i in 0..k.len() {
            let off = k[i] - shift[i] - self.lo[i];
            if off < 0 || off as usize >= self.extent[i] {
                return None;
            }
            cell = cell * self.extent[i] + off as usize;
        }
        match self.table[cell] {
            EMPTY => None,
            idx => Some(idx as usize),
        }
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        self.index_of(k).is_some()
    }

    /// The window translated by `shift` (integer coordinates).
    pub fn translated(&self, shift: &[i64]) -> Result<Self> {
        let pts = self
            .points()
            .map(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect())
            .collect();
        Self::from_points(self.lattice.clone(), pts)
    }

    /// Points of this window whose embedding lies in `[-r, r]^l`.
    pub fn centered_subset(&self, r: f64) -> Vec<Point> {
        let tol = 1e-9 * r.abs().max(1.0);
        (0..self.len())
            .filter(|&i| self.embedded(i).iter().all(|v| v.abs() <= r + tol))
            .map(|i| self.coord(i).to_vec())
            .collect()
    }
}
