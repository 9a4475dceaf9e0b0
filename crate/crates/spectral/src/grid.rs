//! Sampled complex-valued functions on an interval and the quadrature
//! shared by every other module.
//!
//! All integrands in this crate are smooth apart from explicit midpoint
//! reflections, so a uniform grid with composite Simpson is used throughout.
//! The default working grid has [`DEFAULT_PANELS`] panels per unit length,
//! which keeps quadrature error well below the reconstruction tolerances.

use num_complex::Complex64;

use crate::{Error, Result};

/// Number of half-panels per unit length of the default working grid:
/// potentials on [0,1] carry `2 * DEFAULT_PANELS + 1` nodes.
pub const DEFAULT_PANELS: usize = 1000;

/// A function sampled at uniform nodes on `[start, end]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    start: f64,
    end: f64,
    samples: Vec<Complex64>,
}

impl GridFn {
    pub fn new(start: f64, end: f64, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "grid function needs at least 3 samples, got {}",
                samples.len()
            )));
        }
        if !(end > start) {
            return Err(Error::InvalidInput(format!(
                "interval end {end} must exceed start {start}"
            )));
        }
        Ok(Self { start, end, samples })
    }

    pub fn from_fn(start: f64, end: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Self {
        assert!(n >= 3 && end > start);
        let h = (end - start) / (n - 1) as f64;
        let samples = (0..n).map(|i| f(start + i as f64 * h)).collect();
        Self { start, end, samples }
    }

    pub fn from_real_fn(start: f64, end: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(start, end, n, |x| Complex64::new(f(x), 0.0))
    }

    pub fn zero(start: f64, end: f64, n: usize) -> Self {
        Self::from_fn(start, end, n, |_| Complex64::ZERO)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing; exact to machine precision by construction.
    pub fn h(&self) -> f64 {
        (self.end - self.start) / (self.samples.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.h()
    }

    pub fn sample(&self, i: usize) -> Complex64 {
        self.samples[i]
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    /// Value at an arbitrary point of the interval.
    ///
    /// Points within `1e-12` of a node return the node sample exactly, so
    /// that the midpoint-reflection assemblies stay bit-reproducible on
    /// aligned grids. Off-node points are interpolated by the cubic through
    /// the four nearest nodes.
    pub fn value_at(&self, x: f64) -> Complex64 {
        let h = self.h();
        let t = (x - self.start) / h;
        let near = t.round();
        if (t - near).abs() < 1e-12 * (1.0 + t.abs()) {
            let i = (near as isize).clamp(0, self.samples.len() as isize - 1) as usize;
            return self.samples[i];
        }
        let n = self.samples.len();
        if n == 3 {
            // quadratic through all three nodes
            let l0 = (t - 1.0) * (t - 2.0) / 2.0;
            let l1 = -t * (t - 2.0);
            let l2 = t * (t - 1.0) / 2.0;
            return self.samples[0] * l0 + self.samples[1] * l1 + self.samples[2] * l2;
        }
        let i0 = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let s = t - i0 as f64;
        // Lagrange cubic on nodes i0 .. i0+3 in local coordinate s in [0,3]
        let w0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
        let w1 = s * (s - 2.0) * (s - 3.0) / 2.0;
        let w2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
        let w3 = s * (s - 1.0) * (s - 2.0) / 6.0;
        self.samples[i0] * w0
            + self.samples[i0 + 1] * w1
            + self.samples[i0 + 2] * w2
            + self.samples[i0 + 3] * w3
    }

    /// Resample to `n` uniform nodes on the same interval by cubic
    /// interpolation.
    pub fn resample(&self, n: usize) -> Self {
        Self::from_fn(self.start, self.end, n, |x| self.value_at(x))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            start: self.start,
            end: self.end,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two functions on identical grids.
    pub fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.samples.len(), other.samples.len());
        Self {
            start: self.start,
            end: self.end,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// L2 norm over the whole interval, by Simpson on |f|^2.
    pub fn l2_norm(&self) -> f64 {
        let sq = self.map(|v| Complex64::new(v.norm_sqr(), 0.0));
        integrate(&sq).expect("valid grid").re.max(0.0).sqrt()
    }

    /// L2 norm restricted to `[a, b]` (sub-interval of the carrier).
    pub fn l2_norm_on(&self, a: f64, b: f64) -> f64 {
        let n = 1201;
        let g = GridFn::from_fn(a, b, n, |x| {
            let v = self.value_at(x);
            Complex64::new(v.norm_sqr(), 0.0)
        });
        integrate(&g).expect("valid grid").re.max(0.0).sqrt()
    }
}

/// Composite Simpson over the function's interval; `O(h^4)` for smooth
/// integrands. An odd trailing panel is handled by Simpson 3/8.
pub fn integrate(f: &GridFn) -> Result<Complex64> {
    let n = f.len();
    if n < 3 {
        return Err(Error::InvalidInput("integrate needs at least 3 samples".into()));
    }
    let h = f.h();
    let s = f.samples();
    let intervals = n - 1;
    let (simpson_end, mut acc) = if intervals % 2 == 0 {
        (n - 1, Complex64::ZERO)
    } else {
        // last three intervals by the 3/8 rule
        let m = n - 4;
        let tail = (s[m] + s[m + 1] * 3.0 + s[m + 2] * 3.0 + s[m + 3]) * (3.0 * h / 8.0);
        (m, tail)
    };
    if simpson_end >= 2 {
        let mut sum = s[0] + s[simpson_end];
        let mut i = 1;
        while i < simpson_end {
            sum += s[i] * 4.0;
            if i + 1 < simpson_end {
                sum += s[i + 1] * 2.0;
            }
            i += 2;
        }
        acc += sum * (h / 3.0);
    }
    Ok(acc)
}

/// `sin(rho * x) / rho`, series-guarded near `rho * x = 0`.
pub fn sin_rho_x_over_rho(rho: Complex64, x: f64) -> Complex64 {
    let z = rho * x;
    if z.norm() < 1e-4 {
        let z2 = z * z;
        (Complex64::ONE - z2 / 6.0 + z2 * z2 / 120.0) * x
    } else if rho.norm() == 0.0 {
        Complex64::new(x, 0.0)
    } else {
        (z).sin() / rho
    }
}

/// `integral of w(x) cos(rho x) dx` over the carrier interval of `w`.
///
/// The oscillatory factor is evaluated at the nodes; the caller keeps the
/// node density at ten or more per oscillation period of `Re rho`.
pub fn cosine_moment(w: &GridFn, rho: Complex64) -> Result<Complex64> {
    let h = w.h();
    let start = w.start();
    let g = GridFn {
        start: w.start(),
        end: w.end(),
        samples: w
            .samples()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * (rho * (start + i as f64 * h)).cos())
            .collect(),
    };
    integrate(&g)
}

/// A contiguously indexed list of complex values; the index range may be
/// two-sided.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeq {
    first: i64,
    entries: Vec<Complex64>,
}

impl ComplexSeq {
    pub fn new(first: i64, entries: Vec<Complex64>) -> Self {
        Self { first, entries }
    }

    pub fn from_fn(first: i64, last: i64, f: impl Fn(i64) -> Complex64) -> Self {
        assert!(last >= first);
        Self {
            first,
            entries: (first..=last).map(f).collect(),
        }
    }

    pub fn first_index(&self) -> i64 {
        self.first
    }

    pub fn last_index(&self) -> i64 {
        self.first + self.entries.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, n: i64) -> Option<Complex64> {
        if n < self.first {
            return None;
        }
        self.entries.get((n - self.first) as usize).copied()
    }

    pub fn iter_indexed(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.first + i as i64, v))
    }
}
