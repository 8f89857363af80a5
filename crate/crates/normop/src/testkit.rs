//! Seeded generators for matrices, models, vectors and measures.
//!
//! Everything here is deterministic given the seed; the acceptance suite and
//! property tests rely on that to be reproducible run to run.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::ComplexMatrix;
use crate::measure::AtomicMeasure;
use crate::model::{Multiplicity, SpectralModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    // Box-Muller; two uniforms to one complex normal.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u1.ln()).sqrt();
    Complex64::new(r * u2.cos(), r * u2.sin())
}

/// Point in the closed unit disk, radius biased toward the rim.
pub fn unit_disk_point(rng: &mut ChaCha8Rng) -> Complex64 {
    let r: f64 = rng.gen_range(0.0f64..1.0).sqrt();
    let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    Complex64::new(r * th.cos(), r * th.sin())
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix,
/// re-orthogonalized twice for stability.
pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            let mut v: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng)).collect();
            for _ in 0..2 {
                for b in &cols {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        dot += v[i] * b[i].conj();
                    }
                    for i in 0..n {
                        v[i] -= dot * b[i];
                    }
                }
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for z in v.iter_mut() {
                    *z /= norm;
                }
                cols.push(v);
                break;
            }
        }
    }
    ComplexMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Random normal matrix with eigenvalues in the unit disk; returns both the
/// matrix and the eigenvalues it was conjugated from.
pub fn random_normal_matrix(n: usize, rng: &mut ChaCha8Rng) -> (ComplexMatrix, Vec<Complex64>) {
    let u = random_unitary(n, rng);
    let lambdas: Vec<Complex64> = (0..n).map(|_| unit_disk_point(rng)).collect();
    let scaled = ComplexMatrix::from_fn(n, n, |i, j| u.at(i, j) * lambdas[j]);
    let t = scaled.mul(&u.adjoint()).unwrap();
    (t, lambdas)
}

pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, Complex64::new(rng.gen_range(-1.0..1.0), 0.0));
        for j in (i + 1)..n {
            let z = complex_gaussian(rng) * 0.5;
            m.set(i, j, z);
            m.set(j, i, z.conj());
        }
    }
    m
}

/// Random model with well separated atoms in the unit disk. At least
/// `min_inf` blocks get infinite multiplicity, each with `alloc` coordinates
/// already materialized.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    max_blocks: usize,
    min_inf: usize,
    alloc: u32,
    label: &str,
) -> SpectralModel {
    let blocks = rng.gen_range(min_inf.max(1)..=max_blocks.max(min_inf.max(1)));
    let mut atoms: Vec<Complex64> = Vec::new();
    while atoms.len() < blocks {
        let z = unit_disk_point(rng);
        if atoms.iter().all(|a| (a - z).norm() > 0.05) {
            atoms.push(z);
        }
    }
    let spec: Vec<(Complex64, Multiplicity)> = atoms
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mult = if i < min_inf || rng.gen_bool(0.5) {
                Multiplicity::Infinite
            } else {
                Multiplicity::Finite(rng.gen_range(1..4))
            };
            (*z, mult)
        })
        .collect();
    let mut model = SpectralModel::build(&spec, label).unwrap();
    for b in 0..model.blocks().len() {
        if model.blocks()[b].mult == Multiplicity::Infinite {
            for _ in 0..alloc {
                model.allocate_fresh(b as u32).unwrap();
            }
        }
    }
    model
}

/// Random vector over the already-allocated coordinates of a model,
/// optionally normalized.
pub fn random_vector(
    model: &SpectralModel,
    rng: &mut ChaCha8Rng,
    normalize: bool,
) -> crate::model::ModelVector {
    let mut v = crate::model::ModelVector::zero(model.label());
    for (b, block) in model.blocks().iter().enumerate() {
        for j in 0..block.allocated {
            if rng.gen_bool(0.7) {
                v.set_coord(b as u32, j, complex_gaussian(rng) * 0.5);
            }
        }
    }
    if v.coords().is_empty() {
        v.set_coord(0, 0, Complex64::new(1.0, 0.0));
    }
    if normalize {
        let n = v.norm();
        if n > 0.0 {
            v = v.scale(Complex64::new(1.0 / n, 0.0));
        }
    }
    v
}

/// Random positive measure supported on a subset of the given atoms.
pub fn random_positive_measure(atoms: &[Complex64], rng: &mut ChaCha8Rng) -> AtomicMeasure {
    let mut entries = Vec::new();
    for z in atoms {
        if rng.gen_bool(0.8) {
            let mass: f64 = rng.gen_range(0.0..1.0);
            entries.push((*z, Complex64::new(mass, 0.0)));
        }
    }
    if entries.is_empty() {
        entries.push((atoms[0], Complex64::new(rng.gen_range(0.1..1.0), 0.0)));
    }
    AtomicMeasure::from_atoms(entries)
}
