//! File representations of potentials, spectra and trees.
//!
//! Potentials travel as JSON objects `{grid, values_re, values_im}`, spectra
//! as JSON or CSV tables, trees as JSON. Floating-point values are written
//! in the shortest decimal form that parses back to the identical bits, so
//! write-then-read round trips are exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::forward::{Potential, SpecPoint, Spectrum, Tag};
use crate::graph::{Tree, TreeEdge};
use crate::grid::GridFn;
use crate::{Error, Result};

/// A sampled complex function: uniform nodes with real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFnFile {
    pub grid: Vec<f64>,
    pub values_re: Vec<f64>,
    pub values_im: Vec<f64>,
}

impl GridFnFile {
    pub fn from_grid_fn(g: &GridFn) -> Self {
        GridFnFile {
            grid: (0..g.len()).map(|i| g.node(i)).collect(),
            values_re: g.samples().iter().map(|v| v.re).collect(),
            values_im: g.samples().iter().map(|v| v.im).collect(),
        }
    }

    pub fn to_grid_fn(&self) -> Result<GridFn> {
        let n = self.grid.len();
        if self.values_re.len() != n || self.values_im.len() != n {
            return Err(Error::Parse(format!(
                "grid has {n} nodes but values_re/values_im have {}/{}",
                self.values_re.len(),
                self.values_im.len()
            )));
        }
        if n < 3 {
            return Err(Error::Parse(format!("grid needs at least 3 nodes, got {n}")));
        }
        let start = self.grid[0];
        let end = self.grid[n - 1];
        if !(end > start) {
            return Err(Error::Parse(format!("grid must increase, got [{start}, {end}]")));
        }
        let h = (end - start) / (n - 1) as f64;
        for (i, &x) in self.grid.iter().enumerate() {
            if (x - (start + i as f64 * h)).abs() > 1e-9 * (1.0 + h) {
                return Err(Error::Parse(format!(
                    "grid is not uniform near node {i} (x = {x})"
                )));
            }
        }
        let samples = self
            .values_re
            .iter()
            .zip(&self.values_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        GridFn::new(start, end, samples)
    }
}

/// Read a potential on `[0, 1]` from a JSON file, optionally resampling to
/// `grid` nodes.
pub fn read_potential(path: &str, grid: Option<usize>) -> Result<Potential> {
    let text = std::fs::read_to_string(path)?;
    let file: GridFnFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
    let mut g = file.to_grid_fn()?;
    if let Some(n) = grid {
        g = g.resample(n);
    }
    Potential::new(g)
}

pub fn write_grid_fn(path: &str, g: &GridFn) -> Result<()> {
    let file = GridFnFile::from_grid_fn(g);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// One row of a spectrum table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecPointFile {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub z_re: f64,
    pub z_im: f64,
    pub multiplicity: usize,
    pub tag: String,
    pub n: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub k: u8,
    pub points: Vec<SpecPointFile>,
}

fn tag_str(t: Tag) -> &'static str {
    match t {
        Tag::Mu => "mu",
        Tag::Xi => "xi",
        Tag::Unclassified => "unclassified",
    }
}

fn tag_parse(s: &str) -> Result<Tag> {
    match s {
        "mu" => Ok(Tag::Mu),
        "xi" => Ok(Tag::Xi),
        "unclassified" => Ok(Tag::Unclassified),
        other => Err(Error::Parse(format!("unknown subspectrum tag {other:?}"))),
    }
}

impl SpectrumFile {
    pub fn from_spectrum(s: &Spectrum) -> Self {
        SpectrumFile {
            k: s.k,
            points: s
                .points
                .iter()
                .map(|p| SpecPointFile {
                    lambda_re: p.lambda.re,
                    lambda_im: p.lambda.im,
                    z_re: p.z.re,
                    z_im: p.z.im,
                    multiplicity: p.multiplicity,
                    tag: tag_str(p.tag).into(),
                    n: p.n,
                })
                .collect(),
        }
    }

    pub fn to_spectrum(&self) -> Result<Spectrum> {
        if !matches!(self.k, 1 | 2) {
            return Err(Error::Parse(format!("problem index k must be 1 or 2, got {}", self.k)));
        }
        let points = self
            .points
            .iter()
            .map(|p| {
                Ok(SpecPoint {
                    lambda: Complex64::new(p.lambda_re, p.lambda_im),
                    z: Complex64::new(p.z_re, p.z_im),
                    multiplicity: p.multiplicity,
                    tag: tag_parse(&p.tag)?,
                    n: p.n,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Spectrum { k: self.k, points })
    }
}

pub fn read_spectrum(path: &str) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path)?;
    let file: SpectrumFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
    file.to_spectrum()
}

pub fn write_spectrum_json(path: &str, s: &Spectrum) -> Result<()> {
    let file = SpectrumFile::from_spectrum(s);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// CSV table of a spectrum; one row per distinct eigenvalue.
pub fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("lambda_re,lambda_im,z_re,z_im,multiplicity,tag,n\n");
    for p in &s.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.lambda.re,
            p.lambda.im,
            p.z.re,
            p.z.im,
            p.multiplicity,
            tag_str(p.tag),
            p.n
        ));
    }
    out
}

/// One edge of a tree file; `q` omitted or null means zero potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEdgeFile {
    pub parent: usize,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<GridFnFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub delay: f64,
    pub root_bc: u8,
    pub edges: Vec<TreeEdgeFile>,
}

impl TreeFile {
    pub fn to_tree(&self) -> Result<Tree> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let q = match &e.q {
                    Some(f) => f.to_grid_fn()?,
                    None => GridFn::zero(0.0, e.length, 3),
                };
                Ok(TreeEdge { parent: e.parent, length: e.length, q, bc: e.bc })
            })
            .collect::<Result<Vec<_>>>()?;
        Tree::new(self.delay, self.root_bc, edges)
    }
}

pub fn read_tree(path: &str) -> Result<Tree> {
    let text = std::fs::read_to_string(path)?;
    let file: TreeFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
    file.to_tree()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_fn_file_round_trip_is_exact() {
        let g = GridFn::from_fn(0.0, 1.0, 101, |x| {
            Complex64::new((7.3 * x).sin() / 3.0, x * x - 0.1)
        });
        let text = serde_json::to_string(&GridFnFile::from_grid_fn(&g)).unwrap();
        let back: GridFnFile = serde_json::from_str(&text).unwrap();
        let g2 = back.to_grid_fn().unwrap();
        assert_eq!(g.samples(), g2.samples());
        assert_eq!(g.start(), g2.start());
        assert_eq!(g.end(), g2.end());
    }

    #[test]
    fn spectrum_file_round_trip_is_exact() {
        let s = Spectrum {
            k: 2,
            points: vec![
                SpecPoint {
                    lambda: Complex64::new(1.234567890123456789, -3e-17),
                    z: Complex64::new(1.1110000000000007, 0.0),
                    multiplicity: 2,
                    tag: Tag::Mu,
                    n: -3,
                },
                SpecPoint {
                    lambda: Complex64::new(9.86, 0.0),
                    z: Complex64::new(3.14, 0.0),
                    multiplicity: 1,
                    tag: Tag::Unclassified,
                    n: 0,
                },
            ],
        };
        let text = serde_json::to_string(&SpectrumFile::from_spectrum(&s)).unwrap();
        let back: SpectrumFile = serde_json::from_str(&text).unwrap();
        let s2 = back.to_spectrum().unwrap();
        assert_eq!(s.k, s2.k);
        for (a, b) in s.points.iter().zip(&s2.points) {
            assert_eq!(a.lambda, b.lambda);
            assert_eq!(a.z, b.z);
            assert_eq!(a.multiplicity, b.multiplicity);
            assert_eq!(a.tag, b.tag);
            assert_eq!(a.n, b.n);
        }
    }

    #[test]
    fn bad_grid_files_are_rejected() {
        let f = GridFnFile { grid: vec![0.0, 0.3, 1.0], values_re: vec![0.0; 3], values_im: vec![0.0; 3] };
        assert!(matches!(f.to_grid_fn(), Err(Error::Parse(_))));
        let f = GridFnFile { grid: vec![0.0, 0.5, 1.0], values_re: vec![0.0; 2], values_im: vec![0.0; 3] };
        assert!(matches!(f.to_grid_fn(), Err(Error::Parse(_))));
    }

    #[test]
    fn tree_file_builds_star() {
        let q = GridFnFile::from_grid_fn(&GridFn::zero(0.0, 1.0, 5));
        let tf = TreeFile {
            delay: 1.0,
            root_bc: 0,
            edges: vec![
                TreeEdgeFile { parent: 0, length: 1.0, bc: None, q: Some(q.clone()) },
                TreeEdgeFile { parent: 1, length: 1.0, bc: Some(0), q: Some(q.clone()) },
                TreeEdgeFile { parent: 1, length: 1.0, bc: Some(1), q: None },
            ],
        };
        let t = tf.to_tree().unwrap();
        assert_eq!(t.m(), 3);
        assert_eq!(t.children(1), vec![2, 3]);
    }
}
