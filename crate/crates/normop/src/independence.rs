//! Independence of tuples over parameter sets, via projections.
//!
//! A tuple is independent from `C` over `B` exactly when projecting onto the
//! algebraic closure of `B` and onto that of `B` together with `C` give the
//! same vectors. Free extensions realize the same type over `B` while
//! forcing independence, by moving the residual onto freshly materialized
//! coordinates of the same infinite blocks.

use num_complex::Complex64;

use crate::closure::{self};
use crate::model::{ModelVector, Multiplicity, SpectralModel};
use crate::typespace::{type_of, TypeDescriptor};
use crate::{Error, Result};

/// Default tolerance on projection differences.
pub const INDEP_TOL: f64 = 1e-8;

/// Residual mass in a finite block above this is a hard error in free
/// extension; the algebraic closure contains finite blocks in full, so any
/// such mass signals an inconsistent input.
pub const FINITE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct IndependenceReport {
    /// Per-tuple-entry norm of `P_{B union C}(a) - P_B(a)`.
    pub residuals: Vec<f64>,
    pub independent: bool,
    pub tol: f64,
}

/// Tests independence of `tuple` from `c` over `b`.
pub fn indep(
    model: &SpectralModel,
    tuple: &[ModelVector],
    b: &[ModelVector],
    c: &[ModelVector],
    tol: f64,
) -> Result<IndependenceReport> {
    let span_b = closure::acl_span(model, b)?;
    let mut bc: Vec<ModelVector> = b.to_vec();
    bc.extend_from_slice(c);
    let span_bc = closure::acl_span(model, &bc)?;
    let mut residuals = Vec::with_capacity(tuple.len());
    for a in tuple {
        model.check_vector(a)?;
        let p_b = span_b.project(a)?;
        let p_bc = span_bc.project(a)?;
        residuals.push(p_bc.dist(&p_b)?);
    }
    let independent = residuals.iter().all(|r| *r <= tol);
    Ok(IndependenceReport {
        residuals,
        independent,
        tol,
    })
}

/// Moves the residual of `a` over `b` onto fresh coordinates of the same
/// infinite blocks. The returned vector realizes the same type over `b` in
/// the extended model and is exactly independent from everything previously
/// materialized.
fn reroute_residual(
    model: &mut SpectralModel,
    base: &ModelVector,
    residual: &ModelVector,
) -> Result<ModelVector> {
    let mut out = base.clone();
    for (block, mass_sqr) in residual.block_masses() {
        let mass = mass_sqr.sqrt();
        if mass <= 0.0 {
            continue;
        }
        if let Multiplicity::Finite(_) = model.blocks()[block as usize].mult {
            if mass > FINITE_RESIDUAL_TOL {
                return Err(Error::FiniteResidual { block, mass });
            }
            continue;
        }
        let idx = model.allocate_fresh(block)?;
        out.set_coord(block, idx, Complex64::new(mass, 0.0));
    }
    Ok(out)
}

/// Free extension of the type of `a` over `b`, independent from `c`.
///
/// The parameter set is closed algebraically as part of the computation, so
/// callers may pass any finite `b`. Returns the extended model together with
/// the new realization.
pub fn free_extension(
    model: &SpectralModel,
    a: &ModelVector,
    b: &[ModelVector],
    c: &[ModelVector],
) -> Result<(SpectralModel, ModelVector)> {
    model.check_vector(a)?;
    for v in c {
        model.check_vector(v)?;
    }
    let span_b = closure::acl_span(model, b)?;
    let base = span_b.project(a)?;
    let residual = a.sub(&base)?;
    let mut extended = model.clone();
    let a_new = reroute_residual(&mut extended, &base, &residual)?;
    Ok((extended, a_new))
}

/// Morley sequence of length `m` in the type of `a` over `b`: the first
/// entry is `a` itself, later entries carry fresh orthogonal copies of the
/// residual.
pub fn morley_sequence(
    model: &SpectralModel,
    a: &ModelVector,
    b: &[ModelVector],
    m: usize,
) -> Result<(SpectralModel, Vec<ModelVector>)> {
    if m == 0 {
        return Err(Error::Invalid("morley sequence needs length >= 1".into()));
    }
    model.check_vector(a)?;
    let span_b = closure::acl_span(model, b)?;
    let base = span_b.project(a)?;
    let residual = a.sub(&base)?;
    let mut extended = model.clone();
    let mut seq = vec![a.clone()];
    for _ in 1..m {
        let next = reroute_residual(&mut extended, &base, &residual)?;
        seq.push(next);
    }
    Ok((extended, seq))
}

#[derive(Clone, Debug)]
pub struct CanonicalBaseReport {
    pub extended: SpectralModel,
    /// Mean of the Morley sequence.
    pub mean: ModelVector,
    /// Projection of `a` onto the closure of the parameters: the canonical
    /// base vector the means converge to.
    pub base: ModelVector,
    /// Measured distance between mean and base.
    pub deviation: f64,
    /// Predicted deviation `|residual| / sqrt(m)`.
    pub law: f64,
}

/// Cesaro estimate of the canonical base: the mean of a Morley sequence of
/// length `m` approaches the projection of `a` at rate `1/sqrt(m)`.
pub fn canonical_base_estimate(
    model: &SpectralModel,
    a: &ModelVector,
    b: &[ModelVector],
    m: usize,
) -> Result<CanonicalBaseReport> {
    let span_b = closure::acl_span(model, b)?;
    let base = span_b.project(a)?;
    let residual_norm = a.sub(&base)?.norm();
    let (extended, seq) = morley_sequence(model, a, b, m)?;
    let mut sum = ModelVector::zero(model.label());
    for v in &seq {
        sum = sum.add(v)?;
    }
    let mean = sum.scale(Complex64::new(1.0 / m as f64, 0.0));
    let deviation = mean.dist(&base)?;
    Ok(CanonicalBaseReport {
        extended,
        mean,
        base,
        deviation,
        law: residual_norm / (m as f64).sqrt(),
    })
}

#[derive(Clone, Debug)]
pub struct LocalCharacterWitness {
    /// Indices into the parameter list forming the finite sub-family.
    pub subset: Vec<usize>,
    /// Realization at distance below the requested bound that is exactly
    /// independent from the full parameter set over the sub-family.
    pub a_prime: ModelVector,
    pub distance: f64,
}

/// Constructive local character: finds a prefix `B_eps` of the parameters
/// and a vector within `eps` of `a` that is independent from all of `b`
/// over `B_eps`. Always exists with the full prefix, whose distance is zero.
pub fn local_character_witness(
    model: &SpectralModel,
    a: &ModelVector,
    b: &[ModelVector],
    eps: f64,
) -> Result<LocalCharacterWitness> {
    if !(eps > 0.0) {
        return Err(Error::Invalid("local character needs eps > 0".into()));
    }
    let span_full = closure::acl_span(model, b)?;
    let base_full = span_full.project(a)?;
    let residual = a.sub(&base_full)?;
    for take in 0..=b.len() {
        let span_sub = closure::acl_span(model, &b[..take])?;
        let approx = span_sub.project(&base_full)?;
        let distance = base_full.dist(&approx)?;
        if distance < eps {
            let a_prime = approx.add(&residual)?;
            return Ok(LocalCharacterWitness {
                subset: (0..take).collect(),
                a_prime,
                distance,
            });
        }
    }
    unreachable!("full prefix always reaches distance zero");
}

/// Types of two free extensions over the joined parameters; used by the
/// stationarity tests.
pub fn extension_type(
    model: &SpectralModel,
    a: &ModelVector,
    b: &[ModelVector],
    c: &[ModelVector],
) -> Result<(SpectralModel, ModelVector, TypeDescriptor)> {
    let (extended, a_new) = free_extension(model, a, b, c)?;
    let mut bc: Vec<ModelVector> = b.to_vec();
    bc.extend_from_slice(c);
    let ty = type_of(&extended, &[a_new.clone()], &bc, "BC")?;
    Ok((extended, a_new, ty))
}
