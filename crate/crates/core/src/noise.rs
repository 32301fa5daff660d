//! Hash-based lattice randomness and the smooth partition-of-unity blend
//! used to mollify piecewise-constant cell fields.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed
//! and integer coordinates, so realizations are reproducible and can be
//! evaluated lazily at any lattice cell without storing the lattice.

use crate::scalar::Scalar;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; a cheap, well-dispersed 64-bit mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds one word into a running hash state.
#[inline]
pub fn fold(h: u64, v: u64) -> u64 {
    mix64(h ^ v.wrapping_mul(GOLDEN))
}

/// Derives a child seed from a master seed and a coordinate tuple, so that
/// adding cells to an experiment never perturbs existing ones.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    for &p in parts {
        h = fold(h, p);
    }
    h
}

/// Maps a hash to a uniform value in `[0, 1)`.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform `[0,1)` value attached to one lattice cell of one field.
#[inline]
pub fn cell_unit(seed: u64, field_tag: u64, m: i64, n1: i64, n2: i64) -> f64 {
    let mut h = mix64(seed ^ GOLDEN);
    h = fold(h, field_tag);
    h = fold(h, m as u64);
    h = fold(h, n1 as u64);
    h = fold(h, n2 as u64);
    unit_f64(h)
}

/// A tiny deterministic stream for test probes and Monte Carlo sampling.
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { state: mix64(seed ^ GOLDEN) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_unit() * (hi - lo)
    }
}

/// Blend of at most two adjacent cells along one axis, with weights that
/// form a smooth partition of unity.
///
/// Cell `k` covers `[k·cell, (k+1)·cell)`. Each cell boundary carries a
/// C^1 smoothstep transition of half-width `radius`, so the value at `xi`
/// depends only on cells whose interval is within `radius` of `xi`. With
/// `radius <= cell/2` at most two cells contribute.
#[derive(Clone, Copy, Debug)]
pub struct AxisBlend<S> {
    /// Lowest contributing cell index.
    pub base: i64,
    /// Weights of cells `base` and `base + 1`; they sum to 1.
    pub w: [S; 2],
    /// Derivatives of the weights with respect to the coordinate.
    pub dw: [S; 2],
    /// Number of contributing cells (1 or 2).
    pub n: usize,
}

#[inline]
fn smoothstep<S: Scalar>(u: S) -> S {
    u * u * (S::lit(3.0) - S::lit(2.0) * u)
}

#[inline]
fn smoothstep_d<S: Scalar>(u: S) -> S {
    S::lit(6.0) * u * (S::one() - u)
}

/// Weights of the cells contributing to the mollified field at `xi`.
#[inline]
pub fn axis_blend<S: Scalar>(xi: S, cell: S, radius: S) -> AxisBlend<S> {
    let pos = xi / cell;
    let k = pos.floor();
    let ki = k.to_i64().expect("cell index overflow");
    let loc = xi - k * cell;

    if loc < radius {
        // Transition across the left boundary of cell ki.
        let u = (loc / radius + S::one()) * S::lit(0.5);
        let t = smoothstep(u);
        let dt = smoothstep_d(u) / (S::lit(2.0) * radius);
        AxisBlend { base: ki - 1, w: [S::one() - t, t], dw: [-dt, dt], n: 2 }
    } else if loc > cell - radius {
        // Transition across the right boundary of cell ki.
        let u = ((loc - cell) / radius + S::one()) * S::lit(0.5);
        let t = smoothstep(u);
        let dt = smoothstep_d(u) / (S::lit(2.0) * radius);
        AxisBlend { base: ki, w: [S::one() - t, t], dw: [-dt, dt], n: 2 }
    } else {
        AxisBlend { base: ki, w: [S::one(), S::zero()], dw: [S::zero(), S::zero()], n: 1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_unit_is_deterministic_and_in_range() {
        for i in 0..1000i64 {
            let a = cell_unit(42, 3, i, -i, 7);
            let b = cell_unit(42, 3, i, -i, 7);
            assert_eq!(a, b);
            assert!((0.0..1.0).contains(&a));
        }
        assert_ne!(cell_unit(42, 3, 0, 0, 0), cell_unit(43, 3, 0, 0, 0));
    }

    #[test]
    fn derive_seed_varies_with_every_part() {
        let s = derive_seed(1, &[2, 3]);
        assert_ne!(s, derive_seed(1, &[2, 4]));
        assert_ne!(s, derive_seed(1, &[3, 3]));
        assert_ne!(s, derive_seed(2, &[2, 3]));
    }

    #[test]
    fn axis_blend_partitions_unity() {
        let cell = 1.0f64;
        let r = 0.25;
        for i in 0..2000 {
            let xi = -5.0 + i as f64 * 0.005;
            let b = axis_blend(xi, cell, r);
            let sum: f64 = b.w[..b.n].iter().sum();
            assert!((sum - 1.0).abs() < 1e-14, "sum {} at xi {}", sum, xi);
            // Contributing cells must cover xi within radius.
            assert!((b.base as f64) * cell - r <= xi + 1e-12);
            assert!(xi <= ((b.base + b.n as i64) as f64) * cell + r + 1e-12);
        }
    }

    #[test]
    fn axis_blend_weights_are_continuous_at_zone_edges() {
        let cell = 1.0f64;
        let r = 0.25;
        // Walk across a transition zone boundary and check weight continuity.
        let eps = 1e-9;
        for &edge in &[0.25f64, 0.75, 1.0, 1.25] {
            let a = axis_blend(edge - eps, cell, r);
            let b = axis_blend(edge + eps, cell, r);
            // Effective weight of a common cell index must be continuous.
            let wa = |k: i64| -> f64 {
                let mut w = 0.0;
                for j in 0..a.n {
                    if a.base + j as i64 == k {
                        w += a.w[j];
                    }
                }
                w
            };
            let wb = |k: i64| -> f64 {
                let mut w = 0.0;
                for j in 0..b.n {
                    if b.base + j as i64 == k {
                        w += b.w[j];
                    }
                }
                w
            };
            for k in -2..3 {
                assert!((wa(k) - wb(k)).abs() < 1e-6, "jump at edge {edge} cell {k}");
            }
        }
    }

    #[test]
    fn axis_blend_derivative_matches_finite_difference() {
        let cell = 1.0f64;
        let r = 0.25;
        let eps = 1e-6;
        for i in 0..400 {
            let xi = -2.0 + i as f64 * 0.01;
            let b = axis_blend(xi, cell, r);
            if b.n == 1 {
                continue;
            }
            let lo = axis_blend(xi - eps, cell, r);
            let hi = axis_blend(xi + eps, cell, r);
            if lo.base != b.base || hi.base != b.base {
                continue;
            }
            for j in 0..2 {
                let fd = (hi.w[j] - lo.w[j]) / (2.0 * eps);
                assert!((fd - b.dw[j]).abs() < 1e-5, "dw mismatch at {}", xi);
            }
        }
    }

    #[test]
    fn blend_max_slope_is_three_quarters_over_radius() {
        // The advertised Lipschitz constant of a [0,1]-valued mollified
        // field is 0.75/radius per axis; check the weight slope bound.
        let cell = 1.0f64;
        let r = 0.2;
        let mut max_slope: f64 = 0.0;
        for i in 0..10000 {
            let xi = i as f64 * 0.0005;
            let b = axis_blend(xi, cell, r);
            max_slope = max_slope.max(b.dw[0].abs()).max(b.dw[1].abs());
        }
        assert!(max_slope <= 0.75 / r + 1e-9);
        assert!(max_slope >= 0.74 / r);
    }
}
