//! Uniform grid on `[-R, R]^d` (d = 1 or 2), node masks, and CFL helpers.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Uniform node-centered grid over the box `[-half_width, half_width]^dim`
/// with homogeneous Dirichlet boundary for the parabolic solver and frozen
/// boundary values for the level-set solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<S> {
    pub dim: usize,
    pub h: S,
    pub half_width: S,
    pub dt: S,
    pub nx: usize,
    pub ny: usize,
}

impl<S: Scalar> Grid<S> {
    /// Builds a grid; `half_width` is snapped up to a whole number of cells.
    pub fn new(dim: usize, h: S, half_width: S, dt: S) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(CoreError::InvalidSpec(format!("dimension {dim} not in {{1,2}}")));
        }
        if h <= S::zero() || half_width <= S::zero() || dt <= S::zero() {
            return Err(CoreError::InvalidSpec("h, half_width, dt must be positive".into()));
        }
        let k = (half_width / h).ceil().to_usize().ok_or_else(|| {
            CoreError::InvalidSpec("half_width/h overflow".into())
        })?;
        let half_width = S::from_usize(k).unwrap() * h;
        let n = 2 * k + 1;
        let ny = if dim == 2 { n } else { 1 };
        Ok(Self { dim, h, half_width, dt, nx: n, ny })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Coordinate of node `i` along an axis of length `nx`.
    #[inline]
    pub fn coord(&self, i: usize) -> S {
        S::from_usize(i).unwrap() * self.h - self.half_width
    }

    #[inline]
    pub fn pos(&self, idx: usize) -> [S; 2] {
        let ix = idx % self.nx;
        let iy = idx / self.nx;
        let y = if self.dim == 2 { self.coord(iy) } else { S::zero() };
        [self.coord(ix), y]
    }

    /// Index pair of the node nearest to `p`, if inside the box.
    pub fn nearest(&self, p: [S; 2]) -> Option<(usize, usize)> {
        let fx = ((p[0] + self.half_width) / self.h).round();
        let ix = fx.to_isize()?;
        if ix < 0 || ix as usize >= self.nx {
            return None;
        }
        let iy = if self.dim == 2 {
            let fy = ((p[1] + self.half_width) / self.h).round();
            let iy = fy.to_isize()?;
            if iy < 0 || iy as usize >= self.ny {
                return None;
            }
            iy as usize
        } else {
            0
        };
        Some((ix as usize, iy))
    }

    /// Euclidean distance of a point from the origin-centered node `idx`.
    #[inline]
    pub fn dist(&self, idx: usize, p: [S; 2]) -> S {
        let q = self.pos(idx);
        let dx = q[0] - p[0];
        let dy = q[1] - p[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Indices of all nodes within Euclidean distance `r` of `center`
    /// (closed ball).
    pub fn ball_nodes(&self, center: [S; 2], r: S) -> Vec<u32> {
        let mut out = Vec::new();
        let (lo_x, hi_x) = self.axis_range(center[0], r, self.nx);
        let (lo_y, hi_y) = if self.dim == 2 {
            self.axis_range(center[1], r, self.ny)
        } else {
            (0, 0)
        };
        let r2 = r * r;
        for iy in lo_y..=hi_y {
            let y = if self.dim == 2 { self.coord(iy) } else { S::zero() };
            let dy = y - center[1];
            for ix in lo_x..=hi_x {
                let dx = self.coord(ix) - center[0];
                if dx * dx + dy * dy <= r2 {
                    out.push(self.idx(ix, iy) as u32);
                }
            }
        }
        out
    }

    fn axis_range(&self, c: S, r: S, n: usize) -> (usize, usize) {
        let lo = ((c - r + self.half_width) / self.h).floor().to_isize().unwrap_or(0);
        let hi = ((c + r + self.half_width) / self.h).ceil().to_isize().unwrap_or(0);
        let lo = lo.clamp(0, n as isize - 1) as usize;
        let hi = hi.clamp(0, n as isize - 1) as usize;
        (lo, hi)
    }

    /// True if the closed ball `B_r(center)` lies strictly inside the box
    /// with one cell to spare.
    pub fn contains_ball(&self, center: [S; 2], r: S) -> bool {
        let margin = self.half_width - self.h;
        let mut ok = center[0].abs() + r <= margin;
        if self.dim == 2 {
            ok = ok && center[1].abs() + r <= margin;
        }
        ok
    }
}

/// Stable time step for the monotone explicit KPP scheme:
/// `dt * (2 d Lambda_A / h^2 + sum_i |b_i|_max / h + g_max) <= 1`.
pub fn kpp_stable_dt<S: Scalar>(dim: usize, h: S, lambda_max: S, b_max: S, g_max: S) -> S {
    let d = S::from_usize(dim).unwrap();
    let b_sum = d.sqrt() * b_max; // per-component bound is b_max/sqrt(d)
    let denom = S::lit(2.0) * d * lambda_max / (h * h) + b_sum / h + g_max;
    S::one() / denom
}

/// Stable time step for the level-set scheme:
/// `dt * (v_max + c_max) * d / h <= 1/2`.
pub fn geq_stable_dt<S: Scalar>(dim: usize, h: S, v_max: S, c_max: S) -> S {
    let d = S::from_usize(dim).unwrap();
    h / (S::lit(2.0) * d * (v_max + c_max))
}

/// Subset of grid nodes (a super-level set or reachable set).
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub nx: usize,
    pub ny: usize,
    pub bits: Vec<bool>,
}

impl RegionMask {
    pub fn empty(nx: usize, ny: usize) -> Self {
        Self { nx, ny, bits: vec![false; nx * ny] }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn contains_all(&self, nodes: &[u32]) -> bool {
        nodes.iter().all(|&i| self.bits[i as usize])
    }

    /// Morphological dilation by Euclidean radius `r` (in coordinate units).
    pub fn dilated<S: Scalar>(&self, grid: &Grid<S>, r: S) -> RegionMask {
        let k = (r / grid.h).to_f64().unwrap();
        let kc = k.ceil() as isize;
        let mut offsets = Vec::new();
        let ky = if grid.dim == 2 { kc } else { 0 };
        for dy in -ky..=ky {
            for dx in -kc..=kc {
                let d2 = (dx * dx + dy * dy) as f64;
                if d2.sqrt() <= k + 1e-12 {
                    offsets.push((dx, dy));
                }
            }
        }
        let mut out = RegionMask::empty(self.nx, self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if !self.bits[iy * self.nx + ix] {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let jx = ix as isize + dx;
                    let jy = iy as isize + dy;
                    if jx >= 0 && (jx as usize) < self.nx && jy >= 0 && (jy as usize) < self.ny {
                        out.bits[jy as usize * self.nx + jx as usize] = true;
                    }
                }
            }
        }
        out
    }

    /// Largest distance from `center` to a set node, and the count of set
    /// nodes, in one pass.
    pub fn max_radius_from<S: Scalar>(&self, grid: &Grid<S>, center: [S; 2]) -> (f64, usize) {
        let mut r_max = 0.0f64;
        let mut count = 0;
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                count += 1;
                let r = grid.dist(i, center).to_f64_lossy();
                if r > r_max {
                    r_max = r;
                }
            }
        }
        (r_max, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_snaps_half_width() {
        let g: Grid<f64> = Grid::new(2, 0.1, 1.04, 0.01).unwrap();
        assert_eq!(g.nx, 23);
        assert!((g.half_width - 1.1).abs() < 1e-12);
        assert!((g.coord(0) + 1.1).abs() < 1e-12);
        assert!((g.coord(g.nx - 1) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn ball_node_count_matches_enumeration() {
        let g: Grid<f64> = Grid::new(2, 0.1, 2.0, 0.01).unwrap();
        let ball = g.ball_nodes([0.0, 0.0], 1.0);
        // Independent enumeration of {x in hZ^2 : |x| <= 1}.
        let mut count = 0;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let x = g.coord(ix);
                let y = g.coord(iy);
                if x * x + y * y <= 1.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(ball.len(), count);
        // Area sanity: count * h^2 close to pi.
        let area = count as f64 * 0.01;
        assert!((area - std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn one_dimensional_grid_has_single_row() {
        let g: Grid<f64> = Grid::new(1, 0.5, 3.0, 0.01).unwrap();
        assert_eq!(g.ny, 1);
        assert_eq!(g.len(), g.nx);
        let ball = g.ball_nodes([0.0, 0.0], 1.0);
        assert_eq!(ball.len(), 5); // -1.0, -0.5, 0, 0.5, 1.0
    }

    #[test]
    fn cfl_formulas() {
        let dt = kpp_stable_dt(2usize, 0.1f64, 1.0, 0.0, 1.0);
        assert!((dt - 1.0 / 401.0).abs() < 1e-12);
        let dtg = geq_stable_dt(2usize, 0.1f64, 0.5, 1.0);
        assert!((dtg - 0.1 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn mask_subset_and_dilation() {
        let g: Grid<f64> = Grid::new(2, 1.0, 3.0, 0.1).unwrap();
        let mut a = RegionMask::empty(g.nx, g.ny);
        a.bits[g.idx(3, 3)] = true;
        let b = a.dilated(&g, 1.0);
        assert!(a.is_subset_of(&b));
        assert_eq!(b.count(), 5); // center + 4 axis neighbors
        let c = a.dilated(&g, 1.5);
        assert_eq!(c.count(), 9);
    }
}
