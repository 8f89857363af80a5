//! Functional calculus on block-diagonal normal operators.
//!
//! A function acts on a model by mapping every atom of the spectrum;
//! blocks whose images coincide (after canonical rounding) merge, adding
//! multiplicities. Star polynomials `sum c_ij z^i conj(z)^j` supply the
//! definable approximations; `separated_projection` certifies a spectral
//! projection as a polynomial limit by exhibiting a low-error witness.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::common::{atom_key, is_finite_c, AtomKey};
use crate::model::{BlockOperator, Multiplicity, Region, SpectralModel};
use crate::{Error, Result};

/// Witness error bound certified by `separated_projection`.
pub const WITNESS_TOL: f64 = 1e-6;

/// Polynomial in the operator and its adjoint: `sum c_ij z^i conj(z)^j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StarPolynomial {
    /// Keyed by `(z_degree, conj_degree)`; zero coefficients omitted.
    pub coeffs: BTreeMap<(u32, u32), Complex64>,
}

impl StarPolynomial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_term(mut self, zdeg: u32, conjdeg: u32, c: Complex64) -> Self {
        if c != Complex64::new(0.0, 0.0) {
            *self
                .coeffs
                .entry((zdeg, conjdeg))
                .or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        self
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let zc = z.conj();
        self.coeffs
            .iter()
            .map(|(&(i, j), &c)| c * z.powu(i) * zc.powu(j))
            .sum()
    }

    /// Largest total degree of any term.
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|&(i, j)| i + j).max().unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    zdeg: u32,
    conjdeg: u32,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    terms: Vec<TermRepr>,
}

impl Serialize for StarPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyRepr {
            terms: self
                .coeffs
                .iter()
                .map(|(&(i, j), c)| TermRepr {
                    zdeg: i,
                    conjdeg: j,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StarPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(d)?;
        let mut out = StarPolynomial::new();
        for t in repr.terms {
            out = out.with_term(t.zdeg, t.conjdeg, Complex64::new(t.re, t.im));
        }
        Ok(out)
    }
}

/// Push a model forward through a spectrum map. Images falling on the same
/// canonical atom merge; multiplicities add (infinite absorbs).
pub fn functional_calculus<F: Fn(Complex64) -> Complex64>(
    model: &SpectralModel,
    f: F,
    label: &str,
) -> Result<SpectralModel> {
    let mut merged: BTreeMap<AtomKey, (Complex64, Multiplicity)> = BTreeMap::new();
    for (i, b) in model.blocks().iter().enumerate() {
        let image = f(b.lambda);
        if !is_finite_c(image) {
            return Err(Error::NonFinite(i));
        }
        let key = atom_key(image);
        match merged.get_mut(&key) {
            None => {
                merged.insert(key, (image, b.mult));
            }
            Some((_, m)) => *m = m.add(b.mult),
        }
    }
    let spec: Vec<(Complex64, Multiplicity)> = merged.into_values().collect();
    SpectralModel::build(&spec, label)
}

/// Supremum over the spectrum of `|f - p|`.
pub fn polynomial_sup_error<F: Fn(Complex64) -> Complex64>(
    model: &SpectralModel,
    f: F,
    p: &StarPolynomial,
) -> f64 {
    model
        .atoms()
        .iter()
        .map(|&z| (f(z) - p.eval(z)).norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionWitness {
    pub method: String,
    pub degree: u32,
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct SeparatedProjection {
    /// Diagonal 0/1 operator: 1 on blocks inside the first region.
    pub projector: BlockOperator,
    /// Block membership: true where the projector acts as the identity.
    pub membership: Vec<bool>,
    pub witness: ProjectionWitness,
}

/// Spectral projection onto the part of the spectrum inside `inside`,
/// separated from `outside` by at least `eps`, together with a polynomial
/// witness approximating its indicator on the spectrum to within
/// [`WITNESS_TOL`].
///
/// Every atom must belong to exactly one of the two regions.
pub fn separated_projection(
    model: &SpectralModel,
    inside: &Region,
    outside: &Region,
    eps: f64,
) -> Result<SeparatedProjection> {
    if !(eps > 0.0) {
        return Err(Error::Invalid("separation must be positive".into()));
    }
    let blocks = model.blocks();
    if blocks.is_empty() {
        return Err(Error::Invalid("model has no spectrum".into()));
    }
    let mut membership = Vec::with_capacity(blocks.len());
    for b in blocks {
        let a = inside.contains(b.lambda);
        let c = outside.contains(b.lambda);
        match (a, c) {
            (true, false) => membership.push(true),
            (false, true) => membership.push(false),
            (true, true) => {
                return Err(Error::Partition(format!(
                    "atom ({}, {}) lies in both regions",
                    b.lambda.re, b.lambda.im
                )))
            }
            (false, false) => {
                return Err(Error::Partition(format!(
                    "atom ({}, {}) lies in neither region",
                    b.lambda.re, b.lambda.im
                )))
            }
        }
    }
    for (i, bi) in blocks.iter().enumerate() {
        for (j, bj) in blocks.iter().enumerate() {
            if membership[i] && !membership[j] {
                let d = (bi.lambda - bj.lambda).norm();
                if d < eps {
                    return Err(Error::Separation {
                        a_re: bi.lambda.re,
                        a_im: bi.lambda.im,
                        b_re: bj.lambda.re,
                        b_im: bj.lambda.im,
                        dist: d,
                        eps,
                    });
                }
            }
            let _ = j;
        }
    }

    let coeffs: Vec<Complex64> = membership
        .iter()
        .map(|&m| Complex64::new(if m { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let projector = BlockOperator {
        owner: model.label().to_string(),
        coeffs,
    };

    let atoms = model.atoms();
    let targets: Vec<f64> = membership.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let witness = chebyshev_witness(&atoms, &targets, eps)
        .or_else(|| spectrum_interpolation_witness(&atoms, &targets))
        .ok_or(Error::Accuracy {
            what: "separated projection witness",
            value: f64::INFINITY,
            bound: WITNESS_TOL,
        })?;
    if witness.error > WITNESS_TOL {
        return Err(Error::Accuracy {
            what: "separated projection witness",
            value: witness.error,
            bound: WITNESS_TOL,
        });
    }
    Ok(SeparatedProjection {
        projector,
        membership,
        witness,
    })
}

/// Quintic smoothstep: 0 below 0, 1 above 1, C^2 in between.
fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Tensor-grid polynomial interpolation of a smooth bump that is 1 on the
/// selected atoms and 0 on the rest, at doubling degrees. Succeeds when the
/// interpolant reproduces the indicator on the spectrum within tolerance.
fn chebyshev_witness(
    atoms: &[Complex64],
    targets: &[f64],
    eps: f64,
) -> Option<ProjectionWitness> {
    let margin = 0.1;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for a in atoms {
        x0 = x0.min(a.re);
        x1 = x1.max(a.re);
        y0 = y0.min(a.im);
        y1 = y1.max(a.im);
    }
    x0 -= margin;
    x1 += margin;
    y0 -= margin;
    y1 += margin;
    let r = eps / 2.0;
    let selected: Vec<Complex64> = atoms
        .iter()
        .zip(targets)
        .filter(|(_, t)| **t > 0.5)
        .map(|(a, _)| *a)
        .collect();
    // 1 - prod(1 - bump_a): exactly 1 at selected atoms, 0 at distance >= r
    // from all of them.
    let g = |z: Complex64| -> f64 {
        let mut prod = 1.0;
        for a in &selected {
            prod *= 1.0 - smootherstep(1.0 - (z - a).norm() / r);
        }
        1.0 - prod
    };
    for deg in [4usize, 8, 16, 32, 64, 128, 256] {
        let n = deg + 1;
        let node = |k: usize| (std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n as f64)).cos();
        let xs: Vec<f64> = (0..n).map(|k| 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * node(k)).collect();
        let ys: Vec<f64> = (0..n).map(|k| 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * node(k)).collect();
        let w: Vec<f64> = (0..n)
            .map(|k| {
                let s = (std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n as f64)).sin();
                if k % 2 == 0 {
                    s
                } else {
                    -s
                }
            })
            .collect();
        let grid: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| g(Complex64::new(x, y))).collect())
            .collect();
        let lagrange = |nodes: &[f64], weights: &[f64], t: f64| -> Vec<f64> {
            if let Some(hit) = nodes.iter().position(|&v| v == t) {
                let mut l = vec![0.0; nodes.len()];
                l[hit] = 1.0;
                return l;
            }
            let terms: Vec<f64> = nodes
                .iter()
                .zip(weights)
                .map(|(&v, &wk)| wk / (t - v))
                .collect();
            let denom: f64 = terms.iter().sum();
            terms.iter().map(|&t| t / denom).collect()
        };
        let mut err = 0.0f64;
        for (a, &target) in atoms.iter().zip(targets) {
            let lx = lagrange(&xs, &w, a.re);
            let ly = lagrange(&ys, &w, a.im);
            let mut v = 0.0;
            for i in 0..n {
                if lx[i] == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for j in 0..n {
                    row += ly[j] * grid[i][j];
                }
                v += lx[i] * row;
            }
            err = err.max((v - target).abs());
        }
        if err <= WITNESS_TOL {
            return Some(ProjectionWitness {
                method: "tensor-grid interpolation".into(),
                degree: 2 * deg as u32,
                error: err,
            });
        }
    }
    None
}

/// Exact interpolation of the indicator on the finite spectrum: a graded
/// family of monomials `z^i conj(z)^j` is filtered to an independent set on
/// the atoms, then a square linear solve pins the coefficients.
fn spectrum_interpolation_witness(
    atoms: &[Complex64],
    targets: &[f64],
) -> Option<ProjectionWitness> {
    let n = atoms.len();
    // Graded monomial enumeration.
    let mut monos: Vec<(u32, u32)> = Vec::new();
    let cap = (2 * n + 8) as u32;
    'outer: for d in 0..=cap {
        for i in (0..=d).rev() {
            monos.push((i, d - i));
            if monos.len() >= n * n + 8 {
                break 'outer;
            }
        }
    }
    // Greedy rank selection via modified Gram-Schmidt on columns.
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut chosen: Vec<(u32, u32)> = Vec::new();
    for &(i, j) in &monos {
        if chosen.len() == n {
            break;
        }
        let mut col: Vec<Complex64> = atoms
            .iter()
            .map(|z| z.powu(i) * z.conj().powu(j))
            .collect();
        let orig: f64 = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for b in &basis {
            let dot: Complex64 = col
                .iter()
                .zip(b)
                .map(|(c, bv)| c * bv.conj())
                .sum();
            for (cv, bv) in col.iter_mut().zip(b) {
                *cv -= dot * bv;
            }
        }
        let rem: f64 = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if rem > 1e-8 * orig.max(1.0) {
            for c in col.iter_mut() {
                *c /= rem;
            }
            basis.push(col);
            chosen.push((i, j));
        }
    }
    if chosen.len() < n {
        return None;
    }
    // Square solve M c = target with partial pivoting.
    let mut m: Vec<Vec<Complex64>> = atoms
        .iter()
        .map(|z| {
            chosen
                .iter()
                .map(|&(i, j)| z.powu(i) * z.conj().powu(j))
                .collect()
        })
        .collect();
    let mut rhs: Vec<Complex64> = targets.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].norm().partial_cmp(&m[b][col].norm()).unwrap())
            .unwrap();
        if m[piv][col].norm() < 1e-13 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                let sub = f * m[col][k];
                m[row][k] -= sub;
            }
            let sub = f * rhs[col];
            rhs[row] -= sub;
        }
    }
    let mut coef = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * coef[k];
        }
        coef[row] = acc / m[row][row];
    }
    let mut p = StarPolynomial::new();
    for (&(i, j), &c) in chosen.iter().zip(coef.iter()) {
        p = p.with_term(i, j, c);
    }
    let err = atoms
        .iter()
        .zip(targets)
        .map(|(z, &t)| (p.eval(*z) - Complex64::new(t, 0.0)).norm())
        .fold(0.0, f64::max);
    Some(ProjectionWitness {
        method: "spectrum interpolation".into(),
        degree: p.degree(),
        error: err,
    })
}

/// Named spectrum maps for the command line.
pub fn builtin_map(name: &str, params: &[f64]) -> Result<Box<dyn Fn(Complex64) -> Complex64>> {
    match name {
        "square" => {
            if !params.is_empty() {
                return Err(Error::Invalid("square takes no parameters".into()));
            }
            Ok(Box::new(|z| z * z))
        }
        "modsq" => {
            if !params.is_empty() {
                return Err(Error::Invalid("modsq takes no parameters".into()));
            }
            Ok(Box::new(|z| Complex64::new(z.norm_sqr(), 0.0)))
        }
        "mobius" => {
            if params.len() != 8 {
                return Err(Error::Invalid(
                    "mobius takes 8 parameters: re,im of a, b, c, d".into(),
                ));
            }
            let a = Complex64::new(params[0], params[1]);
            let b = Complex64::new(params[2], params[3]);
            let c = Complex64::new(params[4], params[5]);
            let d = Complex64::new(params[6], params[7]);
            if (a * d - b * c).norm() < 1e-12 {
                return Err(Error::Invalid("mobius map is degenerate (ad - bc ~ 0)".into()));
            }
            Ok(Box::new(move |z| (a * z + b) / (c * z + d)))
        }
        "scale" => {
            if params.len() != 2 {
                return Err(Error::Invalid("scale takes 2 parameters: re, im".into()));
            }
            let s = Complex64::new(params[0], params[1]);
            Ok(Box::new(move |z| s * z))
        }
        other => Err(Error::Invalid(format!("unknown map '{other}'"))),
    }
}

/// Checks that a möbius map has no pole on the spectrum before application.
pub fn mobius_pole_check(model: &SpectralModel, c: Complex64, d: Complex64) -> Result<()> {
    for b in model.blocks() {
        if (c * b.lambda + d).norm() < 1e-12 {
            return Err(Error::Invalid(format!(
                "mobius pole at spectrum atom ({}, {})",
                b.lambda.re, b.lambda.im
            )));
        }
    }
    Ok(())
}
