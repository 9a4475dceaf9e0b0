//! Forward spectral problem on the three-edge star: characteristic
//! functions assembled from a pair of potentials, an independent 5x5
//! determinant oracle, eigenvalue computation with argument-principle
//! verification, and classification of the spectrum into its two
//! interleaved subspectra.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::grid::{cosine_moment, integrate, sin_rho_x_over_rho, GridFn, DEFAULT_PANELS};
use crate::model::{self, newton_root, taylor_coeff, ModelFn, SIGMA};
use crate::{ComplexSeq, Error, Result};

/// A potential on the unit interval together with its cached mean.
#[derive(Debug, Clone)]
pub struct Potential {
    q: GridFn,
    omega: Complex64,
}

impl Potential {
    /// Wrap a sampled potential. The carrier must be `[0, 1]`; inputs whose
    /// node count does not align with the internal half-grid scheme are
    /// resampled to the default resolution.
    pub fn new(q: GridFn) -> Result<Self> {
        if q.start().abs() > 1e-12 || (q.end() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "potential carrier must be [0, 1], got [{}, {}]",
                q.start(),
                q.end()
            )));
        }
        // need 2M + 1 nodes with M even so that midpoint reflections and
        // the [0, 2] kernel grid land on exact nodes
        let n = q.len();
        let aligned = n >= 5 && n % 2 == 1 && (n - 1) / 2 % 2 == 0;
        let q = if aligned { q } else { q.resample(2 * DEFAULT_PANELS + 1) };
        let omega = integrate(&q)?;
        Ok(Self { q, omega })
    }

    pub fn from_fn(f: impl Fn(f64) -> Complex64) -> Self {
        Self::new(GridFn::from_fn(0.0, 1.0, 2 * DEFAULT_PANELS + 1, f)).expect("valid carrier")
    }

    pub fn from_real_fn(f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(|x| Complex64::new(f(x), 0.0))
    }

    pub fn zero() -> Self {
        Self::from_fn(|_| Complex64::ZERO)
    }

    pub fn q(&self) -> &GridFn {
        &self.q
    }

    /// The mean `omega = int_0^1 q`.
    pub fn omega(&self) -> Complex64 {
        self.omega
    }
}

/// Even/odd reflection kernels `u^{+-}(x) = (q((1+x)/2) +- q((1-x)/2)) / 4`
/// on `[0, 1]`; exact node lookups thanks to the aligned grid.
pub fn u_pm(q: &Potential) -> (GridFn, GridFn) {
    let n = q.q.len();
    let m = (n - 1) / 2;
    let mut plus = Vec::with_capacity(m + 1);
    let mut minus = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let a = q.q.sample(m + i);
        let b = q.q.sample(m - i);
        plus.push((a + b) * 0.25);
        minus.push((a - b) * 0.25);
    }
    (
        GridFn::new(0.0, 1.0, plus).expect("aligned grid"),
        GridFn::new(0.0, 1.0, minus).expect("aligned grid"),
    )
}

/// The data defining a characteristic function: the two potential means,
/// the problem index, and the Fourier kernel `w` (normally carried on
/// `[0, 2]`; support diagnostics may extend it to `[0, 3]`).
#[derive(Debug, Clone)]
pub struct CharFn {
    pub omega2: Complex64,
    pub omega3: Complex64,
    pub k: u8,
    w: GridFn,
}

impl CharFn {
    pub fn new(omega2: Complex64, omega3: Complex64, k: u8, w: GridFn) -> Result<Self> {
        if k != 1 && k != 2 {
            return Err(Error::InvalidInput(format!("k must be 1 or 2, got {k}")));
        }
        if w.start().abs() > 1e-12 || w.end() < 2.0 - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "kernel carrier must start at 0 and extend to at least 2, got [{}, {}]",
                w.start(),
                w.end()
            )));
        }
        Ok(Self { omega2, omega3, k, w })
    }

    pub fn w(&self) -> &GridFn {
        &self.w
    }

    pub fn model_fn(&self) -> ModelFn {
        ModelFn::new(self.omega2, self.omega3, self.k)
    }

    fn scale(&self) -> f64 {
        1.0 + self.omega2.norm() + self.omega3.norm() + self.w.sup_norm()
    }

    /// Defect of the entirety condition `int w = -F_k(0)`; zero (to
    /// quadrature accuracy) for kernels genuinely built from potentials.
    pub fn entirety_defect(&self) -> f64 {
        let int_w = integrate(&self.w).expect("valid grid");
        (int_w + self.model_fn().f(Complex64::ZERO)).norm()
    }

    /// `theta(rho) = S_k(rho) + int w cos(rho x) dx`, the entire function
    /// `lambda Delta_k(lambda)` in the rho-plane; the root-finding target.
    pub fn theta(&self, rho: Complex64) -> Complex64 {
        self.model_fn().s(rho) + cosine_moment(&self.w, rho).expect("valid grid")
    }

    /// Analytic derivative `theta'(rho) = S_k'(rho) - int w x sin(rho x) dx`.
    pub fn theta_prime(&self, rho: Complex64) -> Complex64 {
        let n = self.w.len();
        let samples: Vec<Complex64> = (0..n)
            .map(|i| {
                let x = self.w.node(i);
                -self.w.sample(i) * x * (rho * x).sin()
            })
            .collect();
        let osc = GridFn::new(self.w.start(), self.w.end(), samples).expect("valid grid");
        self.model_fn().s_prime(rho) + integrate(&osc).expect("valid grid")
    }
}

/// `int w(x) x^j dx` over the kernel carrier.
fn weighted_moment(w: &GridFn, j: u32) -> Complex64 {
    let samples: Vec<Complex64> = (0..w.len())
        .map(|i| w.sample(i) * w.node(i).powi(j as i32))
        .collect();
    integrate(&GridFn::new(w.start(), w.end(), samples).expect("valid grid")).expect("valid grid")
}

/// Assemble the characteristic-function data for problem `k` from the two
/// potentials: `w_k(x) = (u_{k+1}^+ + u_{4-k}^-)(1-x) / 2` on `(0, 1)` and
/// `(u_{k+1}^+ - u_{4-k}^-)(x-1) / 2` on `(1, 2)`, the value at the
/// midpoint being the mean of the one-sided limits.
pub fn build_w(q2: &Potential, q3: &Potential, k: u8) -> Result<CharFn> {
    if k != 1 && k != 2 {
        return Err(Error::InvalidInput(format!("k must be 1 or 2, got {k}")));
    }
    let (p, m) = if k == 1 { (q2, q3) } else { (q3, q2) };
    let (u_plus, _) = u_pm(p);
    let (_, u_minus) = u_pm(m);
    let half = u_plus.len() - 1;
    let mut samples = Vec::with_capacity(2 * half + 1);
    for i in 0..=2 * half {
        let v = if i < half {
            (u_plus.sample(half - i) + u_minus.sample(half - i)) * 0.5
        } else if i > half {
            (u_plus.sample(i - half) - u_minus.sample(i - half)) * 0.5
        } else {
            u_plus.sample(0) * 0.5
        };
        samples.push(v);
    }
    CharFn::new(
        q2.omega,
        q3.omega,
        k,
        GridFn::new(0.0, 2.0, samples).expect("aligned grid"),
    )
}

/// Evaluate `Delta_k(lambda) = theta(sqrt lambda) / lambda`, switching to a
/// Taylor evaluation of the ratio near the origin where the direct division
/// cancels catastrophically.
pub fn eval_char(c: &CharFn, lambda: Complex64) -> Result<Complex64> {
    if lambda.norm() >= 1e-4 {
        return Ok(c.theta(lambda.sqrt()) / lambda);
    }
    let defect = c.entirety_defect();
    if defect > 1e-8 * c.scale() {
        return Err(Error::IllPosedEvaluation { defect });
    }
    // Delta = (F(lambda) - F(0))/lambda + int w (cos(rho x) - 1)/lambda dx,
    // both ratios expanded in lambda (= rho^2)
    let m = c.model_fn();
    let c2 = taylor_coeff(|z| m.s(z), 2);
    let c4 = taylor_coeff(|z| m.s(z), 4);
    let c6 = taylor_coeff(|z| m.s(z), 6);
    let model_part = c2 + c4 * lambda + c6 * lambda * lambda;
    let m2 = weighted_moment(&c.w, 2);
    let m4 = weighted_moment(&c.w, 4);
    let m6 = weighted_moment(&c.w, 6);
    let kernel_part = -m2 / 2.0 + lambda * m4 / 24.0 - lambda * lambda * m6 / 720.0;
    Ok(model_part + kernel_part)
}

/// The pair `(Q(1, lambda), Q'(1, lambda))` for one potential: the building
/// blocks of the determinant oracle. Away from the origin the reflected
/// single-integral forms are used; near it, the direct double-kernel
/// quadrature, which has no `1/rho^2` cancellation.
pub fn q_forms(q: &Potential, lambda: Complex64) -> (Complex64, Complex64) {
    let rho = lambda.sqrt();
    let n = q.q.len();
    if lambda.norm() >= 1e-2 {
        let (u_plus, u_minus) = u_pm(q);
        let m = u_plus.len();
        let cos_int: Vec<Complex64> = (0..m)
            .map(|i| u_plus.sample(i) * (rho * u_plus.node(i)).cos())
            .collect();
        let sin_int: Vec<Complex64> = (0..m)
            .map(|i| u_minus.sample(i) * sin_rho_x_over_rho(rho, u_minus.node(i)))
            .collect();
        let ci = integrate(&GridFn::new(0.0, 1.0, cos_int).expect("grid")).expect("grid");
        let si = integrate(&GridFn::new(0.0, 1.0, sin_int).expect("grid")).expect("grid");
        let l = rho * rho;
        let qq = ci / l - q.omega * rho.cos() / (l * 2.0);
        let qp = q.omega * rho.sin() / (rho * 2.0) + si;
        (qq, qp)
    } else {
        let val: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = q.q.node(i);
                sin_rho_x_over_rho(rho, 1.0 - t) * q.q.sample(i) * sin_rho_x_over_rho(rho, t)
            })
            .collect();
        let der: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = q.q.node(i);
                (rho * (1.0 - t)).cos() * q.q.sample(i) * sin_rho_x_over_rho(rho, t)
            })
            .collect();
        let qq = integrate(&GridFn::new(0.0, 1.0, val).expect("grid")).expect("grid");
        let qp = integrate(&GridFn::new(0.0, 1.0, der).expect("grid")).expect("grid");
        (qq, qp)
    }
}

/// Independent oracle: determinant of the 5x5 matching matrix of the star
/// problem, whose rows encode the root condition, continuity and flux
/// balance at the internal vertex, and the two pendant conditions. Expands
/// to `Delta0 + Q_{k+1}(1, .) cos rho + Q'_{4-k}(1, .) sin rho / rho`.
pub fn det_oracle(q2: &Potential, q3: &Potential, k: u8, lambda: Complex64) -> Complex64 {
    let rho = lambda.sqrt();
    let s = sin_rho_x_over_rho(rho, 1.0);
    let c = rho.cos();
    let d = -rho * rho.sin();
    let (qa, qb) = if k == 1 { (q2, q3) } else { (q3, q2) };
    let (q_val, _) = q_forms(qa, lambda);
    let (_, q_der) = q_forms(qb, lambda);
    let z = Complex64::ZERO;
    let o = Complex64::ONE;
    let mat = nalgebra::Matrix5::from_rows(&[
        nalgebra::RowVector5::new(s, -o, z, z, z),
        nalgebra::RowVector5::new(z, -o, z, o, z),
        nalgebra::RowVector5::new(c, z, -o, z, -o),
        nalgebra::RowVector5::new(q_val, c, s, z, z),
        nalgebra::RowVector5::new(q_der, z, z, d, c),
    ]);
    mat.determinant()
}

/// Subspectrum membership of an eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Mu,
    Xi,
    Unclassified,
}

/// One spectral point: `lambda = z^2` with `z` the right-half-plane
/// representative, its multiplicity, and its subspectrum tag and index.
#[derive(Debug, Clone, Copy)]
pub struct SpecPoint {
    pub lambda: Complex64,
    pub z: Complex64,
    pub multiplicity: usize,
    pub tag: Tag,
    pub n: i64,
}

/// An ordered eigenvalue list for problem `k`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub k: u8,
    pub points: Vec<SpecPoint>,
}

impl Spectrum {
    /// Total eigenvalue count with multiplicity.
    pub fn total(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity).sum()
    }

    pub fn z_with_multiplicity(&self) -> Vec<Complex64> {
        self.points
            .iter()
            .flat_map(|p| std::iter::repeat(p.z).take(p.multiplicity))
            .collect()
    }

    pub fn lambda_with_multiplicity(&self) -> Vec<Complex64> {
        self.points
            .iter()
            .flat_map(|p| std::iter::repeat(p.lambda).take(p.multiplicity))
            .collect()
    }
}

/// Accumulated phase change of `f` along the segment `[z0, z1]`, refined
/// until each step turns by less than pi/2.
fn phase_along(
    f: &(impl Fn(Complex64) -> Complex64 + Sync),
    z0: Complex64,
    z1: Complex64,
    f0: Complex64,
    f1: Complex64,
    depth: u32,
) -> f64 {
    let dphi = (f1 / f0).arg();
    if dphi.abs() <= std::f64::consts::FRAC_PI_2 || depth >= 48 {
        dphi
    } else {
        let mid = (z0 + z1) / 2.0;
        let fm = f(mid);
        phase_along(f, z0, mid, f0, fm, depth + 1) + phase_along(f, mid, z1, fm, f1, depth + 1)
    }
}

/// Zero count (with multiplicity) of `f` inside the rectangle
/// `Re in (lo, hi), |Im| < strip` by the argument principle.
fn winding_count(
    f: &(impl Fn(Complex64) -> Complex64 + Sync),
    lo: f64,
    hi: f64,
    strip: f64,
) -> i64 {
    let corners = [
        Complex64::new(lo, -strip),
        Complex64::new(hi, -strip),
        Complex64::new(hi, strip),
        Complex64::new(lo, strip),
        Complex64::new(lo, -strip),
    ];
    let mut total = 0.0;
    for seg in corners.windows(2) {
        // initial sampling denser than the pi-periodic oscillation of theta
        let steps = (((seg[1] - seg[0]).norm() * 4.0).ceil() as usize).max(8);
        let pts: Vec<Complex64> = (0..=steps)
            .map(|i| seg[0] + (seg[1] - seg[0]) * (i as f64 / steps as f64))
            .collect();
        let vals: Vec<Complex64> = pts.par_iter().map(|&z| f(z)).collect();
        for i in 0..steps {
            total += phase_along(f, pts[i], pts[i + 1], vals[i], vals[i + 1], 0);
        }
    }
    (total / (2.0 * PI)).round() as i64
}

/// First `n` eigenvalues of problem `k` with the default search strip
/// `|Im rho| < 5`.
pub fn eigenvalues(q2: &Potential, q3: &Potential, k: u8, n: usize) -> Result<Spectrum> {
    eigenvalues_with_strip(q2, q3, k, n, 5.0)
}

/// First `n` eigenvalues of problem `k`: Newton iterations on
/// `theta(rho) = rho^2 Delta_k(rho^2)` seeded at the model zeros, verified
/// by an argument-principle count over the search rectangle. Points are
/// returned unclassified; see [`classify_subspectra`].
pub fn eigenvalues_with_strip(
    q2: &Potential,
    q3: &Potential,
    k: u8,
    n: usize,
    strip: f64,
) -> Result<Spectrum> {
    let cf = build_w(q2, q3, k)?;
    let m = cf.model_fn();
    let mz = model::model_zeros(&m, n + 1)?;
    let theta = |z| cf.theta(z);
    let theta_p = |z| cf.theta_prime(z);

    let mut roots: Vec<Complex64> = (1..=n)
        .into_par_iter()
        .map(|i| newton_root(&theta, &theta_p, mz.zeros()[i], 1e-13))
        .collect::<Result<_>>()?;
    for z in &mut roots {
        if z.re < 0.0 || (z.re == 0.0 && z.im < 0.0) {
            *z = -*z;
        }
    }
    roots.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });

    // group collided iterates; a genuine double root is confirmed by a
    // vanishing derivative, otherwise the duplicate inflates the count and
    // the winding check below reports the miss
    let deriv_scale = 1e-5 * cf.scale();
    let mut points: Vec<SpecPoint> = Vec::new();
    for z in roots {
        if let Some(last) = points.last_mut() {
            if (z - last.z).norm() < 1e-7 * (1.0 + z.norm())
                && theta_p(z).norm() < deriv_scale * (1.0 + z.norm())
            {
                last.multiplicity += 1;
                continue;
            }
        }
        points.push(SpecPoint {
            lambda: z * z,
            z,
            multiplicity: 1,
            tag: Tag::Unclassified,
            n: 0,
        });
    }
    if points.iter().map(|p| p.multiplicity).sum::<usize>() != n {
        return Err(Error::MissedRoots {
            expected: n as i64,
            found: points.iter().map(|p| p.multiplicity).sum::<usize>() as i64,
            lo: 0.0,
            hi: mz.zeros()[n].re,
        });
    }
    for p in &points {
        if p.multiplicity > 2 {
            return Err(Error::UnsupportedMultiplicity(p.multiplicity));
        }
    }

    let lo = 1e-3;
    let hi = (mz.zeros()[n].re + mz.zeros()[n + 1].re) / 2.0;
    let inside: i64 = points
        .iter()
        .filter(|p| p.z.re > lo && p.z.re < hi && p.z.im.abs() < strip)
        .map(|p| p.multiplicity as i64)
        .sum();
    // the double zero of theta at rho = 0 and the mirror zeros -z lie
    // outside the rectangle, so the raw count is directly comparable
    let found = winding_count(&theta, lo, hi, strip);
    if found != inside {
        return Err(Error::MissedRoots {
            expected: found,
            found: inside,
            lo,
            hi,
        });
    }

    Ok(Spectrum { k, points })
}

/// Tag every spectral point as `mu` or `xi` by nearest-anchor matching in
/// the rho-plane (anchors `pi n` vs `pi n +- sigma`) and assign the
/// signed subspectrum index; ambiguous points keep the unclassified tag.
pub fn classify_subspectra(s: &Spectrum, _m: &ModelFn) -> Spectrum {
    let mut out = s.clone();
    for p in &mut out.points {
        let re = p.z.re;
        let mut cands: Vec<(f64, Tag, i64)> = Vec::new();
        let n_xi = (re / PI).round() as i64;
        if n_xi >= 1 {
            cands.push(((p.z - Complex64::new(PI * n_xi as f64, 0.0)).norm(), Tag::Xi, n_xi));
        }
        let n_p = ((re - SIGMA) / PI).round() as i64;
        if n_p >= 0 {
            let anchor = PI * n_p as f64 + SIGMA;
            cands.push(((p.z - Complex64::new(anchor, 0.0)).norm(), Tag::Mu, n_p));
        }
        let n_m = ((re + SIGMA) / PI).round() as i64;
        if n_m >= 1 {
            let anchor = PI * n_m as f64 - SIGMA;
            cands.push(((p.z - Complex64::new(anchor, 0.0)).norm(), Tag::Mu, -n_m));
        }
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        match cands.as_slice() {
            [] => {
                p.tag = Tag::Unclassified;
                p.n = 0;
            }
            [best] => {
                p.tag = best.1;
                p.n = best.2;
            }
            [best, second, ..] => {
                if (second.0 - best.0).abs() < 1e-3 {
                    p.tag = Tag::Unclassified;
                    p.n = 0;
                } else {
                    p.tag = best.1;
                    p.n = best.2;
                }
            }
        }
    }
    out
}

/// Extract the two-sided mu-subspectrum `{mu_n}_{|n| >= 1}` from a
/// classified spectrum, over the largest symmetric contiguous index range;
/// the `n = 0` slot carries the conventional supplement `mu_0 = 0`.
pub fn mu_subspectrum(s: &Spectrum) -> Result<ComplexSeq> {
    let mut map = std::collections::HashMap::new();
    for p in &s.points {
        if p.tag == Tag::Mu && p.n != 0 {
            map.insert(p.n, p.lambda);
        }
    }
    let side = |sign: i64| (1..).take_while(|i| map.contains_key(&(sign * i))).count() as i64;
    let n_max = side(1).min(side(-1));
    if n_max < 1 {
        return Err(Error::InsufficientData(
            "no symmetric mu-subspectrum range in classified spectrum".into(),
        ));
    }
    Ok(ComplexSeq::from_fn(-n_max, n_max, |i| {
        if i == 0 {
            Complex64::ZERO
        } else {
            map[&i]
        }
    }))
}

/// Fit the mean `omega_{k+1}` from the xi-family corrections
/// `z_n = pi n + (-1)^n omega_{k+1} / (4 pi n) + ...`, averaging the
/// per-term estimates over the top quartile of available indices.
pub fn xi_omega_fit(s: &Spectrum) -> Result<Complex64> {
    let mut xi: Vec<(i64, Complex64)> = s
        .points
        .iter()
        .filter(|p| p.tag == Tag::Xi && p.n >= 1)
        .map(|p| (p.n, p.z))
        .collect();
    xi.sort_by_key(|(n, _)| *n);
    if xi.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "xi-family fit needs at least 8 points, got {}",
            xi.len()
        )));
    }
    let n_max = xi.last().unwrap().0;
    let cutoff = (3 * n_max) / 4;
    let mut acc = Complex64::ZERO;
    let mut count = 0;
    for (n, z) in xi {
        if n < cutoff.max(1) {
            continue;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        acc += (z - Complex64::new(PI * n as f64, 0.0)) * (sign * 4.0 * PI * n as f64);
        count += 1;
    }
    Ok(acc / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::delta0;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_potential(rng: &mut ChaCha8Rng) -> Potential {
        let coef: Vec<(f64, f64)> = (0..4)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Potential::from_real_fn(move |x| {
            coef.iter()
                .enumerate()
                .map(|(j, (a, b))| a * (PI * j as f64 * x).cos() + b * (PI * (j + 1) as f64 * x).sin())
                .sum()
        })
    }

    #[test]
    fn u_pm_examples() {
        let (up, um) = u_pm(&Potential::from_real_fn(|_| 3.0));
        assert!(up.samples().iter().all(|v| (v - c(1.5)).norm() < 1e-14));
        assert!(um.samples().iter().all(|v| v.norm() < 1e-14));

        // odd about 1/2
        let (up, _) = u_pm(&Potential::from_real_fn(|x| x - 0.5));
        assert!(up.sup_norm() < 1e-14);

        let (up, um) = u_pm(&Potential::from_real_fn(|x| x));
        for i in (0..up.len()).step_by(97) {
            assert_abs_diff_eq!(up.sample(i).re, 0.25, epsilon = 1e-14);
            assert_abs_diff_eq!(um.sample(i).re, up.node(i) / 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn build_w_constants() {
        let q2 = Potential::from_real_fn(|_| 2.0);
        let q3 = Potential::from_real_fn(|_| -1.0);
        let w1 = build_w(&q2, &q3, 1).unwrap();
        let w2 = build_w(&q2, &q3, 2).unwrap();
        assert!(w1.w().samples().iter().all(|v| (v - c(0.5)).norm() < 1e-13));
        assert!(w2.w().samples().iter().all(|v| (v + c(0.25)).norm() < 1e-13));
        assert!(w1.entirety_defect() < 1e-10);
        assert!(w2.entirety_defect() < 1e-10);

        let z = Potential::zero();
        let w0 = build_w(&z, &z, 1).unwrap();
        assert_eq!(w0.w().sup_norm(), 0.0);
        assert_eq!(w0.omega2, Complex64::ZERO);
    }

    #[test]
    fn build_w_entirety_for_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let q2 = random_potential(&mut rng);
            let q3 = random_potential(&mut rng);
            for k in [1, 2] {
                let cf = build_w(&q2, &q3, k).unwrap();
                assert!(cf.entirety_defect() < 1e-10, "defect {}", cf.entirety_defect());
            }
        }
    }

    #[test]
    fn eval_char_zero_potential_is_delta0() {
        let z = Potential::zero();
        let cf = build_w(&z, &z, 2).unwrap();
        for &l in &[
            c(-4.0),
            c(1e-5),
            c(0.5),
            c(25.0),
            Complex64::new(3.0, 4.0),
            Complex64::new(-2.0, -1.0),
        ] {
            let got = eval_char(&cf, l).unwrap();
            let want = delta0(l);
            assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()), "{l}: {got} vs {want}");
        }
        assert_abs_diff_eq!(eval_char(&cf, Complex64::ZERO).unwrap().re, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn eval_char_constant_potentials_closed_form() {
        let (c2, c3) = (0.7, -0.4);
        let cf = build_w(
            &Potential::from_real_fn(|_| c2),
            &Potential::from_real_fn(|_| c3),
            1,
        )
        .unwrap();
        for &l in &[c(2.0), c(17.3), Complex64::new(5.0, 2.0)] {
            let rho = l.sqrt();
            let want = delta0(l) - (c2 - c3) / (4.0 * l) - (c2 + c3) / (4.0 * l) * (rho * 2.0).cos()
                + (rho * 2.0).sin() / (rho * l) * (c2 / 4.0);
            let got = eval_char(&cf, l).unwrap();
            assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn eval_char_continuous_across_origin_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q2 = random_potential(&mut rng);
        let q3 = random_potential(&mut rng);
        let cf = build_w(&q2, &q3, 1).unwrap();
        // the series branch agrees with the direct ratio at the same point
        let l = c(0.99e-4);
        let series = eval_char(&cf, l).unwrap();
        let direct = cf.theta(l.sqrt()) / l;
        assert!((series - direct).norm() < 1e-8 * (1.0 + direct.norm()));
    }

    #[test]
    fn eval_char_rejects_ill_posed_origin() {
        // a kernel inconsistent with the means: entirety fails
        let w = GridFn::from_real_fn(0.0, 2.0, 2001, |_| 1.0);
        let cf = CharFn::new(Complex64::ZERO, Complex64::ZERO, 1, w).unwrap();
        assert!(matches!(
            eval_char(&cf, c(1e-6)),
            Err(Error::IllPosedEvaluation { .. })
        ));
        // away from the origin evaluation is still defined
        assert!(eval_char(&cf, c(4.0)).is_ok());
    }

    #[test]
    fn q_forms_examples() {
        let zero = Potential::zero();
        let (q, qp) = q_forms(&zero, c(5.0));
        assert_eq!(q.norm(), 0.0);
        assert_eq!(qp.norm(), 0.0);

        let cc = 1.7;
        let qc = Potential::from_real_fn(|_| cc);
        for &l in &[c(6.0), Complex64::new(2.0, 1.0)] {
            let rho = l.sqrt();
            let want = (rho.sin() - rho * rho.cos()) / (rho * rho * rho * 2.0) * cc;
            let (q, _) = q_forms(&qc, l);
            assert!((q - want).norm() < 1e-10 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn q_forms_two_quadratures_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_potential(&mut rng);
        // compare the reflected form against the direct double-kernel form
        let direct = |lambda: Complex64| {
            let rho = lambda.sqrt();
            let vals: Vec<Complex64> = (0..q.q().len())
                .map(|i| {
                    let t = q.q().node(i);
                    sin_rho_x_over_rho(rho, 1.0 - t) * q.q().sample(i) * sin_rho_x_over_rho(rho, t)
                })
                .collect();
            let ders: Vec<Complex64> = (0..q.q().len())
                .map(|i| {
                    let t = q.q().node(i);
                    (rho * (1.0 - t)).cos() * q.q().sample(i) * sin_rho_x_over_rho(rho, t)
                })
                .collect();
            (
                integrate(&GridFn::new(0.0, 1.0, vals).unwrap()).unwrap(),
                integrate(&GridFn::new(0.0, 1.0, ders).unwrap()).unwrap(),
            )
        };
        // includes a point just above the formula switch, validating the
        // reflected branch where the 1/lambda amplification is worst
        for &l in &[Complex64::new(4.0, 3.0), c(30.0), c(0.5), c(1.01e-2)] {
            let (a, ap) = q_forms(&q, l);
            let (b, bp) = direct(l);
            assert!((a - b).norm() < 1e-9, "Q at {l}: {a} vs {b}");
            assert!((ap - bp).norm() < 1e-9, "Q' at {l}: {ap} vs {bp}");
        }
    }

    #[test]
    fn det_oracle_matches_eval_char() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q2 = random_potential(&mut rng);
        let q3 = random_potential(&mut rng);
        for k in [1, 2] {
            let cf = build_w(&q2, &q3, k).unwrap();
            for &l in &[c(3.0), c(-7.0), Complex64::new(20.0, 6.0), c(77.0), c(0.3)] {
                let det = det_oracle(&q2, &q3, k, l);
                let direct = eval_char(&cf, l).unwrap();
                assert!(
                    (det - direct).norm() / (1.0 + direct.norm()) < 1e-8,
                    "k={k} l={l}: {det} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn det_oracle_zero_and_swap() {
        let zero = Potential::zero();
        assert!(det_oracle(&zero, &zero, 1, c(PI * PI)).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q2 = random_potential(&mut rng);
        let q3 = random_potential(&mut rng);
        for &l in &[c(5.0), Complex64::new(-3.0, 2.0)] {
            let a = det_oracle(&q2, &q3, 1, l);
            let b = det_oracle(&q3, &q2, 2, l);
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn eigenvalues_zero_potential() {
        let zero = Potential::zero();
        let s = eigenvalues(&zero, &zero, 1, 7).unwrap();
        let sig = SIGMA;
        let want = [
            sig * sig,
            (PI - sig) * (PI - sig),
            PI * PI,
            (PI + sig) * (PI + sig),
            (2.0 * PI - sig) * (2.0 * PI - sig),
            4.0 * PI * PI,
            (2.0 * PI + sig) * (2.0 * PI + sig),
        ];
        assert_eq!(s.total(), 7);
        for (p, &w) in s.points.iter().zip(&want) {
            assert!((p.lambda - c(w)).norm() < 1e-10, "{} vs {w}", p.lambda);
        }
    }

    #[test]
    fn eigenvalues_symmetry_and_asymptotics() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q2 = random_potential(&mut rng);
        let q3 = random_potential(&mut rng);
        let s1 = eigenvalues(&q2, &q3, 1, 8).unwrap();
        let s2 = eigenvalues(&q3, &q2, 2, 8).unwrap();
        for (a, b) in s1.points.iter().zip(&s2.points) {
            assert!((a.lambda - b.lambda).norm() < 1e-9 * (1.0 + a.lambda.norm()));
        }
        // eigenvalues stay near the model zeros
        let m = ModelFn::new(q2.omega(), q3.omega(), 1);
        let mz = model::model_zeros(&m, 9).unwrap();
        for (i, p) in s1.points.iter().enumerate() {
            assert!((p.z - mz.zeros()[i + 1]).norm() < 0.5);
        }
    }

    #[test]
    fn classify_zero_potential_pattern() {
        let zero = Potential::zero();
        let s = eigenvalues(&zero, &zero, 1, 7).unwrap();
        let s = classify_subspectra(&s, &ModelFn::new(Complex64::ZERO, Complex64::ZERO, 1));
        let tags: Vec<(Tag, i64)> = s.points.iter().map(|p| (p.tag, p.n)).collect();
        assert_eq!(
            tags,
            vec![
                (Tag::Mu, 0),
                (Tag::Mu, -1),
                (Tag::Xi, 1),
                (Tag::Mu, 1),
                (Tag::Mu, -2),
                (Tag::Xi, 2),
                (Tag::Mu, 2),
            ]
        );
        let n_tagged = s.points.iter().filter(|p| p.tag != Tag::Unclassified).count();
        assert_eq!(n_tagged + (s.points.len() - n_tagged), s.points.len());
    }

    #[test]
    fn mu_extraction_zero_potential() {
        let zero = Potential::zero();
        let s = eigenvalues(&zero, &zero, 1, 13).unwrap();
        let s = classify_subspectra(&s, &ModelFn::new(Complex64::ZERO, Complex64::ZERO, 1));
        let mu = mu_subspectrum(&s).unwrap();
        assert!(mu.last_index() >= 2);
        for (n, v) in mu.iter_indexed() {
            if n == 0 {
                assert_eq!(v, Complex64::ZERO);
            } else {
                let a = PI * n as f64 + SIGMA;
                assert!((v - c(a * a)).norm() < 1e-9);
            }
        }
    }
}

