//! Command-line front end for the delay-spectral library.
//!
//! Subcommands drive the forward solver, the two inverse algorithms, the
//! round-trip and stability experiments, tree determinants and the
//! Paley-Wiener support diagnostic. Structured objects travel as JSON,
//! spectra tables optionally as CSV.

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use delay_spectral::forward::{
    build_w, classify_subspectra, eigenvalues_with_strip, eval_char, mu_subspectrum, Potential,
    Spectrum,
};
use delay_spectral::graph::assemble_tree_det;
use delay_spectral::inverse::{
    algorithm1, algorithm2, extended_char_from_spectrum, paley_wiener_check, stability_harness,
};
use delay_spectral::io::{
    read_potential, read_spectrum, read_tree, spectrum_csv, write_spectrum_json, GridFnFile,
};
use delay_spectral::model::{model_zeros, ModelFn};
use delay_spectral::{Error, GridFn, Result};

#[derive(Parser)]
#[command(
    name = "delay-spectral",
    about = "Forward and inverse spectral problems for Sturm-Liouville operators \
             with global constant delay on metric graphs",
    version
)]
struct Cli {
    /// Cap on worker threads (default: DELAY_SPECTRAL_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Resample input potentials to this many nodes.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Generic numeric tolerance (root bisection, zero acceptance).
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PairInputs {
    /// Potential q2 as JSON {grid, values_re, values_im}.
    #[arg(long)]
    q2: String,
    /// Potential q3 as JSON {grid, values_re, values_im}.
    #[arg(long)]
    q3: String,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the first n eigenvalues of problem k and classify subspectra.
    Forward {
        #[command(flatten)]
        pair: PairInputs,
        /// Problem index (1 or 2).
        #[arg(short, long)]
        k: u8,
        /// Number of eigenvalues.
        #[arg(short, long)]
        n: usize,
        /// Half-height of the rho search strip.
        #[arg(long, default_value_t = 5.0)]
        strip_im: f64,
        /// Output file; .csv extension selects CSV, otherwise JSON.
        #[arg(short, long)]
        out: String,
    },
    /// Model zeros z0_{n,k} used to seed the eigenvalue Newton iteration.
    EigenSeeds {
        #[command(flatten)]
        pair: PairInputs,
        #[arg(short, long)]
        k: u8,
        #[arg(short, long)]
        n: usize,
        /// Output CSV file.
        #[arg(short, long)]
        out: String,
    },
    /// Algorithm 1: reconstruct (q2, q3) from the two mu-subspectra.
    InverseSubspectra {
        /// Classified spectrum of problem 1 (JSON).
        #[arg(long)]
        spec1: String,
        /// Classified spectrum of problem 2 (JSON).
        #[arg(long)]
        spec2: String,
        /// Output JSON file with fields q2, q3.
        #[arg(short, long)]
        out: String,
    },
    /// Algorithm 2: reconstruct (q2, q3) from the two full spectra.
    InverseSpectra {
        #[arg(long)]
        spec1: String,
        #[arg(long)]
        spec2: String,
        #[arg(short, long)]
        out: String,
    },
    /// Forward then inverse on a known pair; prints L2 reconstruction errors.
    Roundtrip {
        #[command(flatten)]
        pair: PairInputs,
        /// Eigenvalues per spectrum for Algorithm 2 (Algorithm 1 uses the
        /// classified mu-subspectra of the same runs).
        #[arg(short, long, default_value_t = 150)]
        n: usize,
    },
    /// Both sides of the Theorem 5 stability inequality for one perturbation.
    Stability {
        #[command(flatten)]
        pair: PairInputs,
        /// Perturbed potential q2.
        #[arg(long)]
        q2_tilde: String,
        /// Perturbed potential q3.
        #[arg(long)]
        q3_tilde: String,
        #[arg(short, long, default_value_t = 80)]
        n: usize,
    },
    /// Characteristic determinant of a tree problem on a real rho window.
    TreeDet {
        /// Tree description (JSON: delay, root_bc, edges).
        #[arg(long)]
        tree: String,
        #[arg(long, default_value_t = 0.1)]
        rho_min: f64,
        #[arg(long, default_value_t = 10.0)]
        rho_max: f64,
        /// Sample count for the scan.
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Also bisect sign changes of Re det and print the zeros.
        #[arg(long)]
        zeros: bool,
        /// Output CSV file (rho, det_re, det_im).
        #[arg(short, long)]
        out: String,
    },
    /// Support diagnostic: kernel tail norm on (2, 3) from one spectrum.
    PaleyWiener {
        /// Spectrum file (JSON).
        #[arg(long)]
        spec: String,
        /// Potential mean omega2 as "re" or "re,im".
        #[arg(long)]
        omega2: String,
        /// Potential mean omega3 as "re" or "re,im".
        #[arg(long)]
        omega3: String,
    },
}

fn main() {
    std::process::exit(run(std::env::args().collect()));
}

/// Parse and execute; exit 0 on success, 1 on usage/validation errors, 2 on
/// numerical failure.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("DELAY_SPECTRAL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::RootFailure { .. }
        | Error::MissedRoots { .. }
        | Error::UnsupportedMultiplicity(_)
        | Error::IllPosedEvaluation { .. } => 2,
        _ => 1,
    }
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Error::InvalidInput(format!("expected \"re\" or \"re,im\", got {s:?}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(re.trim().parse().map_err(|_| bad())?, 0.0)),
        [re, im] => Ok(Complex64::new(
            re.trim().parse().map_err(|_| bad())?,
            im.trim().parse().map_err(|_| bad())?,
        )),
        _ => Err(bad()),
    }
}

fn read_pair(pair: &PairInputs, grid: Option<usize>) -> Result<(Potential, Potential)> {
    Ok((
        read_potential(&pair.q2, grid)?,
        read_potential(&pair.q3, grid)?,
    ))
}

fn check_problem_pair(s1: &Spectrum, s2: &Spectrum) -> Result<()> {
    if s1.k != 1 || s2.k != 2 {
        return Err(Error::InvalidInput(format!(
            "spec1/spec2 must carry problems k = 1 and k = 2, got {} and {}",
            s1.k, s2.k
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct PairFile {
    q2: GridFnFile,
    q3: GridFnFile,
}

fn write_pair(path: &str, q2: &Potential, q3: &Potential) -> Result<()> {
    let file = PairFile {
        q2: GridFnFile::from_grid_fn(q2.q()),
        q3: GridFnFile::from_grid_fn(q3.q()),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// L2 distance between two functions on a common grid.
fn l2_dist(a: &GridFn, b: &GridFn) -> f64 {
    let b = b.resample(a.len());
    a.zip(&b, |x, y| x - y).l2_norm()
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Forward { pair, k, n, strip_im, out } => {
            let (q2, q3) = read_pair(pair, cli.grid)?;
            let s = eigenvalues_with_strip(&q2, &q3, *k, *n, *strip_im)?;
            let m = ModelFn::new(q2.omega(), q3.omega(), *k);
            let s = classify_subspectra(&s, &m);
            if out.ends_with(".csv") {
                std::fs::write(out, spectrum_csv(&s))?;
            } else {
                write_spectrum_json(out, &s)?;
            }
            println!("{{\"eigenvalues\": {}, \"out\": \"{out}\"}}", s.total());
            Ok(())
        }
        Command::EigenSeeds { pair, k, n, out } => {
            let (q2, q3) = read_pair(pair, cli.grid)?;
            let m = ModelFn::new(q2.omega(), q3.omega(), *k);
            let mz = model_zeros(&m, *n)?;
            let mut csv = String::from("n,z_re,z_im,lambda_re,lambda_im\n");
            for (i, z) in mz.zeros().iter().enumerate() {
                let l = mz.lambda0(i);
                csv.push_str(&format!("{},{},{},{},{}\n", i, z.re, z.im, l.re, l.im));
            }
            std::fs::write(out, csv)?;
            println!("{{\"seeds\": {}, \"out\": \"{out}\"}}", mz.zeros().len());
            Ok(())
        }
        Command::InverseSubspectra { spec1, spec2, out } => {
            let s1 = read_spectrum(spec1)?;
            let s2 = read_spectrum(spec2)?;
            check_problem_pair(&s1, &s2)?;
            let mu1 = mu_subspectrum(&s1)?;
            let mu2 = mu_subspectrum(&s2)?;
            let (q2, q3) = algorithm1(&mu1, &mu2)?;
            write_pair(out, &q2, &q3)?;
            println!(
                "{{\"omega2_re\": {}, \"omega2_im\": {}, \"omega3_re\": {}, \"omega3_im\": {}, \"out\": \"{out}\"}}",
                q2.omega().re, q2.omega().im, q3.omega().re, q3.omega().im
            );
            Ok(())
        }
        Command::InverseSpectra { spec1, spec2, out } => {
            let s1 = read_spectrum(spec1)?;
            let s2 = read_spectrum(spec2)?;
            check_problem_pair(&s1, &s2)?;
            let (q2, q3) = algorithm2(&s1, &s2)?;
            write_pair(out, &q2, &q3)?;
            // residual: the characteristic functions rebuilt from the
            // reconstruction, evaluated at the input eigenvalues
            let mut residual = 0.0_f64;
            for s in [&s1, &s2] {
                let cf = build_w(&q2, &q3, s.k)?;
                for lambda in s.lambda_with_multiplicity() {
                    residual = residual.max(eval_char(&cf, lambda)?.norm());
                }
            }
            println!(
                "{{\"omega2_re\": {}, \"omega3_re\": {}, \"char_residual\": {residual}, \"out\": \"{out}\"}}",
                q2.omega().re, q3.omega().re
            );
            Ok(())
        }
        Command::Roundtrip { pair, n } => {
            let (q2, q3) = read_pair(pair, cli.grid)?;
            let mut specs = Vec::new();
            for k in [1u8, 2u8] {
                let s = eigenvalues_with_strip(&q2, &q3, k, *n, 5.0)?;
                let m = ModelFn::new(q2.omega(), q3.omega(), k);
                specs.push(classify_subspectra(&s, &m));
            }
            let (r2, r3) = algorithm2(&specs[0], &specs[1])?;
            let alg2 = (l2_dist(q2.q(), r2.q()), l2_dist(q3.q(), r3.q()));
            let mu1 = mu_subspectrum(&specs[0])?;
            let mu2 = mu_subspectrum(&specs[1])?;
            let (r2, r3) = algorithm1(&mu1, &mu2)?;
            let alg1 = (l2_dist(q2.q(), r2.q()), l2_dist(q3.q(), r3.q()));
            println!(
                "{{\"n\": {n}, \"alg1_l2_err_q2\": {}, \"alg1_l2_err_q3\": {}, \
                 \"alg2_l2_err_q2\": {}, \"alg2_l2_err_q3\": {}}}",
                alg1.0, alg1.1, alg2.0, alg2.1
            );
            Ok(())
        }
        Command::Stability { pair, q2_tilde, q3_tilde, n } => {
            let (q2, q3) = read_pair(pair, cli.grid)?;
            let q2t = read_potential(q2_tilde, cli.grid)?;
            let q3t = read_potential(q3_tilde, cli.grid)?;
            let r = stability_harness((&q2, &q3), (&q2t, &q3t), *n)?;
            println!(
                "{{\"potential_dist\": {}, \"spectral_dist\": {}, \"ratio\": {}}}",
                r.potential_dist,
                r.spectral_dist,
                r.ratio.map_or("null".into(), |v| v.to_string())
            );
            Ok(())
        }
        Command::TreeDet { tree, rho_min, rho_max, count, zeros, out } => {
            if !(*count >= 2 && rho_max > rho_min) {
                return Err(Error::InvalidInput(
                    "tree-det needs count >= 2 and rho_max > rho_min".into(),
                ));
            }
            let t = read_tree(tree)?;
            let det = |rho: f64| -> Result<Complex64> {
                assemble_tree_det(&t, Complex64::new(rho * rho, 0.0))
            };
            let h = (rho_max - rho_min) / (*count - 1) as f64;
            let mut csv = String::from("rho,det_re,det_im\n");
            let mut vals = Vec::with_capacity(*count);
            for i in 0..*count {
                let rho = rho_min + i as f64 * h;
                let d = det(rho)?;
                vals.push((rho, d));
                csv.push_str(&format!("{},{},{}\n", rho, d.re, d.im));
            }
            std::fs::write(out, csv)?;
            if *zeros {
                let mut roots = Vec::new();
                for w in vals.windows(2) {
                    let (mut a, fa) = w[0];
                    let (mut b, fb) = w[1];
                    if fa.re == 0.0 || fa.re.signum() == fb.re.signum() {
                        continue;
                    }
                    let mut fa = fa.re;
                    while b - a > cli.tol {
                        let mid = 0.5 * (a + b);
                        let fm = det(mid)?.re;
                        if fm == 0.0 || fm.signum() == fa.signum() {
                            a = mid;
                            fa = fm;
                        } else {
                            b = mid;
                        }
                    }
                    roots.push(0.5 * (a + b));
                }
                let list: Vec<String> = roots.iter().map(|r| r.to_string()).collect();
                println!("{{\"zeros_rho\": [{}], \"out\": \"{out}\"}}", list.join(", "));
            } else {
                println!("{{\"samples\": {count}, \"out\": \"{out}\"}}");
            }
            Ok(())
        }
        Command::PaleyWiener { spec, omega2, omega3 } => {
            let s = read_spectrum(spec)?;
            let om2 = parse_complex(omega2)?;
            let om3 = parse_complex(omega3)?;
            let cf = extended_char_from_spectrum(&s, (om2, om3))?;
            let tail = paley_wiener_check(&cf);
            println!("{{\"tail_l2_norm_2_3\": {tail}}}");
            Ok(())
        }
    }
}
