use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly spaced points `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let g = AxisGrid { lo, hi, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Grid(format!("axis needs at least 2 points (got {})", self.n)));
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Grid(format!("axis bounds [{}, {}] are not increasing", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Distance from `v` to the axis interval, zero inside.
    pub fn outside_distance(&self, v: f64) -> f64 {
        (self.lo - v).max(0.0) + (v - self.hi).max(0.0)
    }

    /// Lower cell index and fractional offset of `v`, clamped onto the axis.
    pub fn locate(&self, v: f64) -> (usize, f64) {
        let v = v.clamp(self.lo, self.hi);
        let f = (v - self.lo) / self.spacing();
        let i = (f.floor() as usize).min(self.n - 2);
        let a = (f - i as f64).clamp(0.0, 1.0);
        (i, a)
    }
}

/// Cartesian product of axes, stored row-major (last axis varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    axes: Vec<AxisGrid>,
    strides: Vec<usize>,
    len: usize,
}

impl StateGrid {
    pub fn new(axes: Vec<AxisGrid>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Grid("state grid needs at least one axis".into()));
        }
        for a in &axes {
            a.validate()?;
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].n;
        }
        let len = strides[0] * axes[0].n;
        Ok(StateGrid { axes, strides, len })
    }

    pub fn axes(&self) -> &[AxisGrid] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    /// Coordinates of grid point `flat` written into `out`.
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for (d, s) in self.strides.iter().enumerate() {
            let i = rem / s;
            rem %= s;
            out[d] = self.axes[d].point(i);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.point_into(flat, &mut v);
        v
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, v)| a.contains(*v))
    }

    /// Summed per-axis distance from `x` to the grid box.
    pub fn outside_distance(&self, x: &[f64]) -> f64 {
        self.axes.iter().zip(x).map(|(a, v)| a.outside_distance(*v)).sum()
    }

    /// Multilinear interpolation of `table` at `x`, with `x` clamped onto the grid.
    /// Corners with zero weight are skipped, so grid nodes reproduce their value exactly.
    pub fn interpolate(&self, table: &[f64], x: &[f64]) -> f64 {
        self.interpolate_where(table, x, |_| true)
    }

    /// Multilinear interpolation using only the cell corners accepted by `keep`,
    /// with their weights renormalised. Falls back to all corners when none is kept.
    pub fn interpolate_where(&self, table: &[f64], x: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
        let d = self.dim();
        debug_assert_eq!(table.len(), self.len);
        let mut base = 0;
        let mut frac = [0.0f64; 16];
        let mut fr_vec;
        let frac: &mut [f64] = if d <= 16 {
            &mut frac[..d]
        } else {
            fr_vec = vec![0.0; d];
            &mut fr_vec
        };
        for k in 0..d {
            let (i, a) = self.axes[k].locate(x[k]);
            base += i * self.strides[k];
            frac[k] = a;
        }
        let (mut acc, mut kept_acc, mut kept_w) = (0.0, 0.0, 0.0);
        let mut dropped = false;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut off = 0;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    off += self.strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                let v = table[base + off];
                acc += w * v;
                if keep(base + off) {
                    kept_acc += w * v;
                    kept_w += w;
                } else {
                    dropped = true;
                }
            }
        }
        if dropped && kept_w > 0.0 {
            kept_acc / kept_w
        } else {
            acc
        }
    }
}
