//! Inverse problem: reconstruct the two potentials from mu-subspectra
//! (moment-based pipeline) or from full spectra (product representation and
//! cosine inversion), plus a stability experiment harness and a support
//! diagnostic for the reconstructed kernel.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::forward::{
    classify_subspectra, eigenvalues, mu_subspectrum, CharFn, Potential, Spectrum,
};
use crate::grid::{integrate, sin_rho_x_over_rho, GridFn, DEFAULT_PANELS};
use crate::model::{
    gamma_from_subspectrum, model_zeros, omega_from_gamma, product_eval, stability_metric,
    ModelFn, ProductRep,
};
use crate::{ComplexSeq, Error, Result};

/// One basis function: the nu-th derivative of `cos(sqrt(lambda) x)` with
/// respect to `lambda`, frozen at `lambda = mu`.
#[derive(Debug, Clone, Copy)]
pub struct BasisFun {
    pub mu: Complex64,
    pub nu: usize,
}

impl BasisFun {
    /// Evaluate the basis function at `x`, with series guards near
    /// `mu = 0`.
    pub fn eval(&self, x: f64) -> Complex64 {
        let r = self.mu.sqrt();
        match self.nu {
            0 => (r * x).cos(),
            1 => -sin_rho_x_over_rho(r, x) * (x / 2.0),
            2 => {
                if self.mu.norm() < 1e-4 {
                    let x2 = x * x;
                    Complex64::new(x2 * x2 / 12.0, 0.0) - self.mu * (x2 * x2 * x2 / 120.0)
                } else {
                    let l = self.mu;
                    -(r * x).cos() * (x * x) / (l * 4.0) + (r * x).sin() * x / (r * r * r * 4.0)
                }
            }
            _ => unreachable!("constructor caps nu at 2"),
        }
    }
}

/// The moment-problem basis built from a mu-subspectrum: values grouped by
/// multiplicity, with derivative orders along each group, and the
/// conventional supplement `mu = 0` at index 0.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    funs: Vec<BasisFun>,
}

/// Clustering threshold for detecting multiple eigenvalues in noisy data.
const MULTIPLICITY_TOL: f64 = 1e-6;

/// Build the basis descriptors from a two-sided subspectrum sequence; the
/// index-0 entry is replaced by the exact supplement `mu_0 = 0`. Runs of
/// consecutive equal values (within 1e-6) are encoded as derivative orders
/// `nu = 0, 1, ...`; groups deeper than 3 are unsupported.
pub fn basis_c(mu_seq: &ComplexSeq) -> Result<BasisSystem> {
    let mut funs = Vec::with_capacity(mu_seq.len());
    let mut prev: Option<(Complex64, usize)> = None;
    for (n, raw) in mu_seq.iter_indexed() {
        let mu = if n == 0 { Complex64::ZERO } else { raw };
        let nu = match prev {
            Some((p, nu_prev)) if (mu - p).norm() < MULTIPLICITY_TOL * (1.0 + p.norm()) => {
                nu_prev + 1
            }
            _ => 0,
        };
        if nu > 2 {
            return Err(Error::UnsupportedMultiplicity(nu + 1));
        }
        prev = Some((mu, nu));
        funs.push(BasisFun { mu, nu });
    }
    if funs.is_empty() {
        return Err(Error::InsufficientData("empty subspectrum".into()));
    }
    Ok(BasisSystem { funs })
}

impl BasisSystem {
    pub fn funs(&self) -> &[BasisFun] {
        &self.funs
    }
}

/// The target moments of the kernel against the basis functions.
#[derive(Debug, Clone)]
pub struct MomentData {
    pub beta: Vec<Complex64>,
    pub model: ModelFn,
}

/// `beta = -F_k^(nu)(mu)` for every basis entry, derivatives by central
/// differences with step `1e-4 (1 + |mu|)`.
pub fn moments_beta(m: &ModelFn, b: &BasisSystem) -> MomentData {
    let beta = b
        .funs
        .iter()
        .map(|bf| {
            let h = 1e-4 * (1.0 + bf.mu.norm());
            match bf.nu {
                0 => -m.f(bf.mu),
                1 => -(m.f(bf.mu + h) - m.f(bf.mu - h)) / (2.0 * h),
                _ => -(m.f(bf.mu + h) - m.f(bf.mu) * 2.0 + m.f(bf.mu - h)) / (h * h),
            }
        })
        .collect();
    MomentData { beta, model: *m }
}

/// Result of the regularized moment solve.
#[derive(Debug, Clone)]
pub struct MomentSolution {
    /// The reconstructed kernel on `[0, 2]`.
    pub w: GridFn,
    /// Condition number of the rectangular system.
    pub condition: f64,
    /// Set when the condition number exceeds 1e12; the solution is still
    /// returned, regularized by the singular-value cutoff.
    pub ill_conditioned: bool,
    /// Euclidean norm of the unfitted moment residual.
    pub residual: f64,
}

/// `int_0^2 cos(a x) cos(b x) dx` in closed form.
fn cos_cos_integral(a: Complex64, b: Complex64) -> Complex64 {
    (sin_rho_x_over_rho(a - b, 2.0) + sin_rho_x_over_rho(a + b, 2.0)) / 2.0
}

/// Orthonormal cosine modes on `[0, 2]`: index 0 is the constant `1/sqrt 2`,
/// index `m >= 1` is `cos(pi m x / 2)`.
fn mode_value(m: usize, x: f64) -> f64 {
    if m == 0 {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        (PI * m as f64 * x / 2.0).cos()
    }
}

/// Least-squares kernel reconstruction: find `w` in the span of the first
/// `modes + 1` cosine modes minimizing the moment misfit against the basis.
/// Rows of plain cosine type use the closed-form integral; derivative rows
/// fall back to quadrature. Solved by SVD with a relative singular-value
/// cutoff of 1e-10.
pub fn solve_w_moments(b: &BasisSystem, md: &MomentData, modes: usize) -> Result<MomentSolution> {
    if md.beta.len() != b.funs.len() {
        return Err(Error::InvalidInput(format!(
            "moment count {} does not match basis size {}",
            md.beta.len(),
            b.funs.len()
        )));
    }
    let rows = b.funs.len();
    let cols = modes + 1;
    let quad_n = 2 * DEFAULT_PANELS + 1;
    let gram_rows: Vec<Vec<Complex64>> = b
        .funs
        .par_iter()
        .map(|bf| {
            (0..cols)
                .map(|m| {
                    let freq = Complex64::new(PI * m as f64 / 2.0, 0.0);
                    if bf.nu == 0 {
                        let v = cos_cos_integral(bf.mu.sqrt(), freq);
                        if m == 0 {
                            v * std::f64::consts::FRAC_1_SQRT_2
                        } else {
                            v
                        }
                    } else {
                        let prod = GridFn::from_fn(0.0, 2.0, quad_n, |x| {
                            bf.eval(x) * mode_value(m, x)
                        });
                        integrate(&prod).expect("valid grid")
                    }
                })
                .collect()
        })
        .collect();
    let gram = nalgebra::DMatrix::from_fn(rows, cols, |i, j| gram_rows[i][j]);
    let rhs = nalgebra::DVector::from_iterator(rows, md.beta.iter().copied());

    let svd = gram.clone().svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let s_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let coef = svd
        .solve(&rhs, 1e-10 * s_max)
        .map_err(|e| Error::InvalidInput(format!("svd solve failed: {e}")))?;
    let residual = (gram * &coef - rhs).norm();

    let w = GridFn::from_fn(0.0, 2.0, quad_n, |x| {
        (0..cols).map(|m| coef[m] * mode_value(m, x)).sum()
    });
    Ok(MomentSolution {
        w,
        condition,
        ill_conditioned: condition > 1e12,
        residual,
    })
}

/// Invert the kernel map: `q2(x) = 2(w1 - w2)(2x) + 2(w1 + w2)(2 - 2x)` and
/// `q3(x) = 2(w2 - w1)(2x) + 2(w1 + w2)(2 - 2x)`.
pub fn recover_q(w1: &GridFn, w2: &GridFn) -> Result<(Potential, Potential)> {
    for w in [w1, w2] {
        if w.start().abs() > 1e-12 || w.end() < 2.0 - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "kernel carrier must cover [0, 2], got [{}, {}]",
                w.start(),
                w.end()
            )));
        }
    }
    let n = 2 * DEFAULT_PANELS + 1;
    let eval = |x: f64| {
        let d = w1.value_at(2.0 * x) - w2.value_at(2.0 * x);
        let s = w1.value_at(2.0 - 2.0 * x) + w2.value_at(2.0 - 2.0 * x);
        (d * 2.0 + s * 2.0, -d * 2.0 + s * 2.0)
    };
    let q2 = GridFn::from_fn(0.0, 1.0, n, |x| eval(x).0);
    let q3 = GridFn::from_fn(0.0, 1.0, n, |x| eval(x).1);
    Ok((Potential::new(q2)?, Potential::new(q3)?))
}

/// Default cosine-mode count of the moment solve.
pub const DEFAULT_MODES: usize = 60;

/// Reconstruction from two mu-subspectra: estimate the means from the
/// subspectrum asymptotics, solve the moment problem for each kernel, and
/// invert the kernel map.
pub fn algorithm1(mu1: &ComplexSeq, mu2: &ComplexSeq) -> Result<(Potential, Potential)> {
    for mu in [mu1, mu2] {
        if mu.last_index() < 40 || mu.first_index() > -40 {
            return Err(Error::InsufficientData(format!(
                "subspectrum range [{}, {}] is shorter than 40 entries per side",
                mu.first_index(),
                mu.last_index()
            )));
        }
    }
    let gamma1 = gamma_from_subspectrum(mu1)?;
    let gamma2 = gamma_from_subspectrum(mu2)?;
    let (omega2, omega3) = omega_from_gamma(gamma1, gamma2);
    let mut kernels = Vec::with_capacity(2);
    for (k, mu) in [(1u8, mu1), (2u8, mu2)] {
        let m = ModelFn::new(omega2, omega3, k);
        let basis = basis_c(mu)?;
        let md = moments_beta(&m, &basis);
        kernels.push(solve_w_moments(&basis, &md, DEFAULT_MODES)?.w);
    }
    recover_q(&kernels[0], &kernels[1])
}

/// Estimate the means from a pair of classified spectra via their
/// mu-subspectra.
fn omega_from_spectra(spec1: &Spectrum, spec2: &Spectrum) -> Result<(Complex64, Complex64)> {
    let mut gammas = Vec::with_capacity(2);
    for s in [spec1, spec2] {
        let classified = classify_subspectra(s, &ModelFn::new(Complex64::ZERO, Complex64::ZERO, s.k));
        let mu = mu_subspectrum(&classified)
            .map_err(|e| Error::NeedsOmega(format!("mu-subspectrum extraction failed: {e}")))?;
        gammas.push(
            gamma_from_subspectrum(&mu)
                .map_err(|e| Error::NeedsOmega(format!("gamma estimate failed: {e}")))?,
        );
    }
    Ok(omega_from_gamma(gammas[0], gammas[1]))
}

/// Reconstruction from two full spectra, with the means estimated from the
/// classified mu-families.
pub fn algorithm2(spec1: &Spectrum, spec2: &Spectrum) -> Result<(Potential, Potential)> {
    let omega = omega_from_spectra(spec1, spec2)?;
    algorithm2_with_omega(spec1, spec2, omega)
}

/// Reconstruction from two full spectra with explicitly supplied means
/// (the override for inputs whose classification is ambiguous).
pub fn algorithm2_with_omega(
    spec1: &Spectrum,
    spec2: &Spectrum,
    (omega2, omega3): (Complex64, Complex64),
) -> Result<(Potential, Potential)> {
    let mut kernels = Vec::with_capacity(2);
    for s in [spec1, spec2] {
        let m = ModelFn::new(omega2, omega3, s.k);
        kernels.push(kernel_from_spectrum(s, &m, 2.0)?);
    }
    recover_q(&kernels[0], &kernels[1])
}

/// Rebuild the kernel on `[0, carrier_end]` from one spectrum by evaluating
/// the characteristic function through its zero product and inverting the
/// cosine transform: coefficients `A_n = lambda Delta(lambda) - F(lambda)`
/// at `lambda = (pi n / L)^2`, `L = carrier_end`, summed with half weight
/// on the constant mode.
fn kernel_from_spectrum(s: &Spectrum, m: &ModelFn, carrier_end: f64) -> Result<GridFn> {
    let eigen = s.lambda_with_multiplicity();
    let n_eigen = eigen.len();
    if n_eigen < 20 {
        return Err(Error::InsufficientData(format!(
            "kernel inversion needs at least 20 eigenvalues, got {n_eigen}"
        )));
    }
    let mz = model_zeros(m, n_eigen + 1)?;
    let z_top = s.points.last().unwrap().z.re;
    let p = ProductRep::new(eigen, *m, mz)?;

    // modes with frequency below the covered part of the rho-axis
    let n_modes = ((z_top / PI) * (carrier_end / 2.0)).floor() as usize;
    let mut coeffs: Vec<Complex64> = (0..=n_modes)
        .into_par_iter()
        .map(|n| {
            let rho = PI * n as f64 / carrier_end;
            let lambda = Complex64::new(rho * rho, 0.0);
            lambda * product_eval(&p, lambda) - p.model_fn.f(lambda)
        })
        .collect();

    // The kernel is supported in [0, 2] with a generically nonzero limit
    // w(2-); on a carrier longer than 2 the truncated cosine series of that
    // jump rings into (2, carrier_end) and would swamp the support
    // diagnostic. Estimate the jump from the O(1/n) coefficient tail
    // (integration by parts gives c_n ~ w(2-) L sin(2 pi n / L) / (pi n))
    // and move it into an exact step, synthesizing only the smooth part.
    let l = carrier_end;
    let mut jump = Complex64::ZERO;
    if l > 2.0 + 1e-12 && n_modes >= 12 {
        let mut est = Vec::new();
        for n in (2 * n_modes / 3)..=n_modes {
            let s = (2.0 * PI * n as f64 / l).sin();
            if s.abs() > 0.5 {
                est.push(coeffs[n] * PI * n as f64 / (l * s));
            }
        }
        if !est.is_empty() {
            jump = est.iter().sum::<Complex64>() / est.len() as f64;
            coeffs[0] -= jump * 2.0;
            for (n, c) in coeffs.iter_mut().enumerate().skip(1) {
                *c -= jump * l * (2.0 * PI * n as f64 / l).sin() / (PI * n as f64);
            }
        }
    }

    let quad_n = (DEFAULT_PANELS as f64 * carrier_end) as usize + 1;
    let norm = 2.0 / carrier_end;
    Ok(GridFn::from_fn(0.0, carrier_end, quad_n, |x| {
        let mut acc = coeffs[0] / 2.0;
        for (n, c) in coeffs.iter().enumerate().skip(1) {
            acc += c * (PI * n as f64 * x / carrier_end).cos();
        }
        // right-continuous at the support edge, so the node at x = 2 and
        // everything beyond stay free of the step
        let step = if x < 2.0 { jump } else { Complex64::ZERO };
        acc * norm + step
    }))
}

/// Assemble a characteristic function from one spectrum with the kernel
/// carried on the extended interval `[0, 3]`; input to
/// [`paley_wiener_check`], where genuine spectra produce a kernel vanishing
/// beyond 2.
pub fn extended_char_from_spectrum(
    s: &Spectrum,
    (omega2, omega3): (Complex64, Complex64),
) -> Result<CharFn> {
    let m = ModelFn::new(omega2, omega3, s.k);
    let w = kernel_from_spectrum(s, &m, 3.0)?;
    CharFn::new(omega2, omega3, s.k, w)
}

/// Support diagnostic: the L2 norm of the kernel on `(2, 3)`. A kernel
/// reconstructed from a genuine spectrum is supported in `[0, 2]`, so a
/// non-small tail signals data inconsistent with any potential pair.
pub fn paley_wiener_check(c: &CharFn) -> f64 {
    if c.w().end() <= 2.0 + 1e-12 {
        return 0.0;
    }
    c.w().l2_norm_on(2.0, c.w().end().min(3.0))
}

/// Both sides of the stability inequality for one perturbation pair.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    /// `sum_j ||q_j - q_j~||_{L2}`.
    pub potential_dist: f64,
    /// `sum_k || { n (z_n - z_n~) } ||_{l2}` over the two problems.
    pub spectral_dist: f64,
    /// `potential_dist / spectral_dist`, `None` when both vanish.
    pub ratio: Option<f64>,
}

/// Compare a potential pair against a perturbed pair: L2 distance of the
/// potentials versus the weighted l2 distance of the first `n` eigenvalue
/// square roots of both problems.
pub fn stability_harness(
    pair: (&Potential, &Potential),
    pair_tilde: (&Potential, &Potential),
    n: usize,
) -> Result<StabilityReport> {
    let potential_dist = pair.0.q().zip(pair_tilde.0.q(), |a, b| a - b).l2_norm()
        + pair.1.q().zip(pair_tilde.1.q(), |a, b| a - b).l2_norm();
    let mut spectral_dist = 0.0;
    for k in [1u8, 2u8] {
        let s = eigenvalues(pair.0, pair.1, k, n)?;
        let st = eigenvalues(pair_tilde.0, pair_tilde.1, k, n)?;
        spectral_dist += stability_metric(&s.z_with_multiplicity(), &st.z_with_multiplicity())?;
    }
    let ratio = if spectral_dist == 0.0 && potential_dist == 0.0 {
        None
    } else if spectral_dist == 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(potential_dist / spectral_dist)
    };
    Ok(StabilityReport {
        potential_dist,
        spectral_dist,
        ratio,
    })
}
