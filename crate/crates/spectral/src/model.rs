//! The potential-mean-only "model" layer: the free characteristic function,
//! the model entire functions `S_k` / `F_k` determined by the two potential
//! means, their zeros, and the infinite-product representation built on
//! those zeros.
//!
//! Everything here depends on the potentials only through the means
//! `omega2`, `omega3`; the full potential-dependent machinery lives in
//! [`crate::forward`].

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

/// `sigma = arccos(-1/3) / 2`, the offset of the shifted zero families.
pub const SIGMA: f64 = 0.955_316_618_124_509_3;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Model data: the two potential means and the problem index `k` in {1, 2}.
#[derive(Debug, Clone, Copy)]
pub struct ModelFn {
    pub omega2: Complex64,
    pub omega3: Complex64,
    pub k: u8,
}

impl ModelFn {
    pub fn new(omega2: Complex64, omega3: Complex64, k: u8) -> Self {
        assert!(k == 1 || k == 2, "k must be 1 or 2");
        Self { omega2, omega3, k }
    }

    /// Constant term `g = (-1)^k (omega2 - omega3) / 4`.
    pub fn g(&self) -> Complex64 {
        let sign = if self.k == 1 { -1.0 } else { 1.0 };
        (self.omega2 - self.omega3) * (sign / 4.0)
    }

    /// Coefficient of `cos 2 rho`: `h = -(omega2 + omega3) / 4`.
    pub fn h(&self) -> Complex64 {
        -(self.omega2 + self.omega3) / 4.0
    }

    /// `S_k(rho) = rho (1 + 3 cos 2 rho)/2 sin rho + h cos 2 rho + g`.
    pub fn s(&self, rho: Complex64) -> Complex64 {
        let c2 = (rho * 2.0).cos();
        rho * (1.0 + 3.0 * c2) * 0.5 * rho.sin() + self.h() * c2 + self.g()
    }

    /// Analytic derivative of `S_k`.
    pub fn s_prime(&self, rho: Complex64) -> Complex64 {
        let s2 = (rho * 2.0).sin();
        let c2 = (rho * 2.0).cos();
        let c = (1.0 + 3.0 * c2) * 0.5;
        c * (rho.sin() + rho * rho.cos()) - rho * rho.sin() * s2 * 3.0 - self.h() * s2 * 2.0
    }

    /// `F_k(lambda) = S_k(sqrt lambda)`; entire because `S_k` is even, so
    /// the branch of the square root is irrelevant.
    pub fn f(&self, lambda: Complex64) -> Complex64 {
        self.s(lambda.sqrt())
    }

    /// `F_k'(lambda) = S_k'(sqrt lambda) / (2 sqrt lambda)`.
    pub fn f_prime(&self, lambda: Complex64) -> Complex64 {
        let rho = lambda.sqrt();
        if rho.norm() < 1e-6 {
            // F(lambda) = F(0) + F'(0) lambda + ...; take the linear Taylor
            // coefficient of F, i.e. the rho^2 coefficient of S.
            return taylor_coeff(|z| self.s(z), 2);
        }
        self.s_prime(rho) / (rho * 2.0)
    }
}

/// Free characteristic function `Delta_0(lambda) = sin(sqrt lambda) /
/// (2 sqrt lambda) * (1 + 3 cos 2 sqrt lambda)`, with the removable
/// singularity at the origin handled by its Taylor series.
pub fn delta0(lambda: Complex64) -> Complex64 {
    if lambda.norm() < 1e-6 {
        let l = lambda;
        let sinc = Complex64::ONE - l / 6.0 + l * l / 120.0 - l * l * l / 5040.0;
        let cos2 = Complex64::ONE - l * 2.0 + l * l * (2.0 / 3.0) - l * l * l * (4.0 / 45.0);
        sinc * (Complex64::ONE + cos2 * 3.0) * 0.5
    } else {
        let rho = lambda.sqrt();
        rho.sin() / (rho * 2.0) * (1.0 + 3.0 * (rho * 2.0).cos())
    }
}

/// The pair `(sigma, gamma_k)` describing the mu-subspectrum asymptotics.
pub fn sigma_gamma(m: &ModelFn) -> (f64, Complex64) {
    let sign = if m.k == 1 { -1.0 } else { 1.0 };
    let gamma = ((m.omega2 + m.omega3) / 3.0 + (m.omega2 - m.omega3) * sign) * (SQRT3 / 16.0);
    (SIGMA, gamma)
}

/// Invert the `(omega2, omega3) -> (gamma_1, gamma_2)` map.
pub fn omega_from_gamma(gamma1: Complex64, gamma2: Complex64) -> (Complex64, Complex64) {
    let c = 8.0 / SQRT3;
    ((gamma1 + gamma2 * 2.0) * c, (gamma1 * 2.0 + gamma2) * c)
}

/// Estimate `gamma_k` from a two-sided mu-subspectrum of the asymptotic
/// form `mu_n = (pi n + sigma)^2 + 2 (-1)^n gamma_k + o(1)`.
///
/// The limit is replaced by an average of the per-term estimates over the
/// top quartile of available |n|, combined over both index signs, which
/// suppresses the alternating remainder noise.
pub fn gamma_from_subspectrum(mu: &crate::ComplexSeq) -> Result<Complex64> {
    let n_max = mu.last_index().max(-mu.first_index());
    let usable: Vec<(i64, Complex64)> = mu.iter_indexed().filter(|(n, _)| *n != 0).collect();
    if usable.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "gamma estimate needs at least 20 subspectrum entries, got {}",
            usable.len()
        )));
    }
    let cutoff = (3 * n_max) / 4;
    let mut acc = Complex64::ZERO;
    let mut count = 0usize;
    for (n, mu_n) in usable {
        if n.abs() < cutoff.max(1) {
            continue;
        }
        let anchor = PI * n as f64 + SIGMA;
        let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        acc += (mu_n - Complex64::new(anchor * anchor, 0.0)) * (0.5 * sign);
        count += 1;
    }
    Ok(acc / count as f64)
}

/// Zeros of the model function `S_k` indexed as in the lambda-plane:
/// `zeros[n]` is `z0_n` with `0 <= Re z0_n <= Re z0_{n+1}`, so that
/// `zeros[n]^2` enumerates the zeros of `F_k` with multiplicity. When
/// `s = 2` the origin zero occupies `zeros[0]`.
#[derive(Debug, Clone)]
pub struct ModelZeros {
    zeros: Vec<Complex64>,
    s: usize,
    alpha: Complex64,
}

impl ModelZeros {
    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    /// Multiplicity of the zero of `S_k` at the origin (0 or 2).
    pub fn s(&self) -> usize {
        self.s
    }

    /// `alpha = lim S_k(rho) / rho^s`.
    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    /// Paired model value `lambda0_n`: the square of `z0_n`, with the
    /// convention `-1` for a vanishing model zero.
    pub fn lambda0(&self, n: usize) -> Complex64 {
        let z = self.zeros[n];
        if z.norm() < 1e-9 {
            Complex64::new(-1.0, 0.0)
        } else {
            z * z
        }
    }
}

pub(crate) fn newton_root(
    f: &impl Fn(Complex64) -> Complex64,
    df: &impl Fn(Complex64) -> Complex64,
    seed: Complex64,
    tol: f64,
) -> Result<Complex64> {
    let mut z = seed;
    for _ in 0..50 {
        let step = f(z) / df(z);
        z -= step;
        if step.norm() < tol * (1.0 + z.norm()) {
            return Ok(z);
        }
    }
    Err(Error::RootFailure { seed })
}

/// Asymptotic seed of the n-th member of each of the three zero families
/// of `S_k`; family 0 sits near `pi n`, families 1 and 2 near
/// `pi n + sigma` and `pi n - sigma`.
fn family_seed(family: usize, n: i64, g: Complex64, h: Complex64) -> Complex64 {
    let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let base = PI * n as f64;
    match family {
        0 => {
            let corr = if n == 0 {
                Complex64::ZERO
            } else {
                (g + h) * (sign / (2.0 * base))
            };
            Complex64::new(base, 0.0) - corr
        }
        fam => {
            let off = if fam == 1 { SIGMA } else { -SIGMA };
            let corr = if n == 0 {
                Complex64::ZERO
            } else {
                (g - h / 3.0) * (sign * SQRT3 / (4.0 * base))
            };
            Complex64::new(base + off, 0.0) + corr
        }
    }
}

/// Find the first `n + 1` zeros `z0_0 .. z0_n` of `S_k` in the closed right
/// half-plane, ordered by real part, together with the origin multiplicity
/// `s` and the leading coefficient `alpha`.
pub fn model_zeros(m: &ModelFn, n: usize) -> Result<ModelZeros> {
    let (g, h) = (m.g(), m.h());
    let scale = 1.0 + m.omega2.norm() + m.omega3.norm();
    let s = if m.s(Complex64::ZERO).norm() < 1e-12 * scale { 2 } else { 0 };
    let alpha = taylor_coeff(|z| m.s(z), s);
    if s == 2 && alpha.norm() < 1e-10 * scale {
        return Err(Error::UnsupportedMultiplicity(4));
    }

    let f = |z| m.s(z);
    let df = |z| m.s_prime(z);
    let per_family = n / 3 + 4;
    let mut roots: Vec<Complex64> = Vec::new();
    if s == 0 {
        // the n = 0 member of the pi*n family: at the origin only when
        // S(0) = 0, otherwise a nearby zero seeded from S(0) + c2 rho^2 = 0
        let c2 = taylor_coeff(|z| m.s(z), 2);
        let seed = (-m.s(Complex64::ZERO) / c2).sqrt();
        let mut z = newton_root(&f, &df, seed, 1e-13)?;
        if z.re < 0.0 {
            z = -z;
        }
        roots.push(z);
    }
    for family in 0..3 {
        let n0 = if family == 1 { 0 } else { 1 };
        for idx in n0..=per_family as i64 {
            let seed = family_seed(family, idx, g, h);
            let mut z = newton_root(&f, &df, seed, 1e-13)?;
            if z.re < 0.0 {
                z = -z; // S_k is even
            }
            if z.norm() < 1e-8 {
                continue; // origin zeros are carried by s
            }
            roots.push(z);
        }
    }
    roots.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    // collapse accidental duplicates from neighbouring seeds; a genuine
    // double zero is kept twice and recognised by a vanishing derivative
    let mut dedup: Vec<Complex64> = Vec::new();
    for z in roots {
        if let Some(&last) = dedup.last() {
            if (z - last).norm() < 1e-9 * (1.0 + z.norm()) && df(z).norm() > 1e-6 * scale {
                continue;
            }
        }
        dedup.push(z);
    }

    let lead = s / 2;
    if dedup.len() + lead < n + 1 {
        return Err(Error::InsufficientData(format!(
            "only {} model zeros located, {} requested",
            dedup.len() + lead,
            n + 1
        )));
    }
    let mut zeros = vec![Complex64::ZERO; lead];
    zeros.extend_from_slice(&dedup[..n + 1 - lead]);
    for z in &zeros[lead..] {
        debug_assert!(m.s(*z).norm() < 1e-10 * (1.0 + z.norm()) * scale);
    }
    Ok(ModelZeros { zeros, s, alpha })
}

/// A truncated eigenvalue sequence paired with the model zeros that seed
/// its asymptotics; `eigen[i]` is `lambda_{i+1}` and pairs with
/// `model.lambda0(i + 1)` by sorted index.
#[derive(Debug, Clone)]
pub struct ProductRep {
    pub eigen: Vec<Complex64>,
    pub model_fn: ModelFn,
    pub model: ModelZeros,
}

impl ProductRep {
    pub fn new(eigen: Vec<Complex64>, model_fn: ModelFn, model: ModelZeros) -> Result<Self> {
        if eigen.len() + 1 > model.zeros().len() {
            return Err(Error::InvalidInput(format!(
                "{} eigenvalues need at least {} model zeros",
                eigen.len(),
                eigen.len() + 1
            )));
        }
        Ok(Self { eigen, model_fn, model })
    }

    pub fn truncation(&self) -> usize {
        self.eigen.len()
    }
}

/// Evaluate the characteristic function from its zeros by the
/// ratio-accelerated product
///
/// `Delta(lambda) = B(lambda) * prod_{n=1}^{N} (lambda_n - lambda) /
/// (lambda0_n - lambda)`,
///
/// where `B` is the model product summed in closed form: `F(lambda) /
/// lambda` when `s = 2` and `F(lambda) / (lambda - lambda0_0)` when
/// `s = 0`. The dropped tail `prod_{n>N}` is a product of factors
/// `1 + O(kappa_n / n^2)` and converges far faster than the bare product.
/// A factor whose accelerated denominator vanishes (lambda within 1e-12 of
/// a model zero) is replaced by the direct factor, with the matching zero
/// of `F` divided out through `F'`.
pub fn product_eval(p: &ProductRep, lambda: Complex64) -> Complex64 {
    let n = p.truncation();
    let mz = &p.model;
    let guard = 1e-12 * (1.0 + lambda.norm());

    let mut hit = None;
    for i in 1..=n {
        if (mz.lambda0(i) - lambda).norm() < guard {
            hit = Some(i);
            break;
        }
    }

    let base = match (mz.s(), hit) {
        (2, None) => {
            if lambda.norm() < 1e-12 {
                mz.alpha()
            } else {
                p.model_fn.f(lambda) / lambda
            }
        }
        (2, Some(_)) => -p.model_fn.f_prime(lambda) / lambda,
        (_, None) => {
            let l0 = mz.lambda0(0);
            if (lambda - l0).norm() < guard {
                -p.model_fn.f_prime(lambda)
            } else {
                p.model_fn.f(lambda) / (lambda - l0)
            }
        }
        (_, Some(_)) => -p.model_fn.f_prime(lambda) / (lambda - mz.lambda0(0)),
    };

    let mut acc = base;
    for i in 1..=n {
        let num = p.eigen[i - 1] - lambda;
        if hit == Some(i) {
            acc *= num;
        } else {
            acc *= num / (mz.lambda0(i) - lambda);
        }
    }
    acc
}

/// Weighted l2 distance `|| { n (z_n - z~_n) } ||` between two truncated
/// zero sequences (index starting at 1).
pub fn stability_metric(z: &[Complex64], z_tilde: &[Complex64]) -> Result<f64> {
    if z.len() != z_tilde.len() {
        return Err(Error::InvalidInput(format!(
            "sequence lengths differ: {} vs {}",
            z.len(),
            z_tilde.len()
        )));
    }
    let sum: f64 = z
        .iter()
        .zip(z_tilde)
        .enumerate()
        .map(|(i, (a, b))| ((i + 1) as f64 * (a - b).norm()).powi(2))
        .sum();
    Ok(sum.sqrt())
}

/// j-th Taylor coefficient at the origin via the Cauchy integral on a
/// circle of radius 1/2, trapezoid with 128 nodes; spectrally accurate for
/// entire functions.
pub fn taylor_coeff(f: impl Fn(Complex64) -> Complex64, j: usize) -> Complex64 {
    let m = 128usize;
    let r = 0.5f64;
    let mut acc = Complex64::ZERO;
    for k in 0..m {
        let theta = 2.0 * PI * k as f64 / m as f64;
        let z = Complex64::from_polar(r, theta);
        acc += f(z) * Complex64::from_polar(1.0, -(j as f64) * theta);
    }
    acc / (m as f64 * r.powi(j as i32))
}
