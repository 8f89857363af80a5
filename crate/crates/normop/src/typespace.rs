//! Types of tuples over parameter sets, represented concretely.
//!
//! A type over `B` is determined by the projections of the tuple onto the
//! definable closure of `B` together with the matrix of scalar measures of
//! the residuals. For one free variable over the empty set this collapses to
//! a single positive measure on the spectrum, and the map from types to
//! measures is a bijection onto the positive measures supported there.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::closure;
use crate::equivalence::TheoryDescriptor;
use crate::measure::{hellinger_sq, AtomicMeasure};
use crate::model::{ModelVector, SpectralModel};
use crate::{Error, Result};

/// Slack allowed when deciding whether a type concentrates on the isolated
/// part of the spectrum.
pub const PRINCIPAL_TOL: f64 = 1e-9;

/// Upper bound on the number of net elements [`epsilon_net`] will produce.
pub const NET_BUDGET: u64 = 2_000_000;

/// Concrete type of an `n`-tuple over a parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeDescriptor {
    pub n: u32,
    pub param_label: String,
    /// Projections of the tuple onto the definable closure of the parameters.
    pub base: Vec<ModelVector>,
    /// Scalar measures of the residuals, `gram[i][j] = mu_{c_i, c_j}`.
    pub gram: Vec<Vec<AtomicMeasure>>,
}

impl TypeDescriptor {
    /// Residual measure of the single variable; only for 1-types.
    pub fn residual_measure(&self) -> Result<&AtomicMeasure> {
        if self.n != 1 {
            return Err(Error::Arity {
                expected: 1,
                got: self.n,
            });
        }
        Ok(&self.gram[0][0])
    }

    fn check_comparable(&self, other: &TypeDescriptor) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Arity {
                expected: self.n,
                got: other.n,
            });
        }
        if self.param_label != other.param_label {
            return Err(Error::ParamMismatch {
                left: self.param_label.clone(),
                right: other.param_label.clone(),
            });
        }
        Ok(())
    }

    /// Componentwise comparison: base projections within `tol` in norm and
    /// residual measures within `tol` on every atom.
    pub fn approx_eq(&self, other: &TypeDescriptor, tol: f64) -> Result<bool> {
        self.check_comparable(other)?;
        for (a, b) in self.base.iter().zip(other.base.iter()) {
            if a.dist(b)? > tol {
                return Ok(false);
            }
        }
        for (row_a, row_b) in self.gram.iter().zip(other.gram.iter()) {
            for (ma, mb) in row_a.iter().zip(row_b.iter()) {
                if crate::measure::total_variation_distance(ma, mb) > tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Computes the type of `tuple` over the parameters.
pub fn type_of(
    model: &SpectralModel,
    tuple: &[ModelVector],
    params: &[ModelVector],
    param_label: &str,
) -> Result<TypeDescriptor> {
    if tuple.is_empty() {
        return Err(Error::Arity {
            expected: 1,
            got: 0,
        });
    }
    let span = closure::dcl_span(model, params)?;
    let mut base = Vec::with_capacity(tuple.len());
    let mut residuals = Vec::with_capacity(tuple.len());
    for a in tuple {
        model.check_vector(a)?;
        let p = span.project(a)?;
        residuals.push(a.sub(&p)?);
        base.push(p);
    }
    let mut gram = Vec::with_capacity(tuple.len());
    for ci in &residuals {
        let mut row = Vec::with_capacity(tuple.len());
        for cj in &residuals {
            row.push(model.scalar_measure(ci, cj)?);
        }
        gram.push(row);
    }
    Ok(TypeDescriptor {
        n: tuple.len() as u32,
        param_label: param_label.to_string(),
        base,
        gram,
    })
}

/// The measure of a 1-type over the empty set: for a vector `v` this is the
/// scalar measure `mu_{v,v}`, a positive measure of total mass `|v|^2`.
pub fn phi1(model: &SpectralModel, v: &ModelVector) -> Result<AtomicMeasure> {
    let mu = model.scalar_measure(v, v)?;
    mu.ensure_positive(crate::measure::NONZERO_TOL)?;
    Ok(mu)
}

/// Metric on 1-types over a common parameter set:
/// `d^2 = |base difference|^2 + sum over atoms of squared root-mass gaps`.
pub fn type_distance(p: &TypeDescriptor, q: &TypeDescriptor) -> Result<f64> {
    p.check_comparable(q)?;
    if p.n != 1 {
        return Err(Error::Arity {
            expected: 1,
            got: p.n,
        });
    }
    let base_gap = p.base[0].dist(&q.base[0])?;
    let meas_gap = hellinger_sq(p.residual_measure()?, q.residual_measure()?)?;
    Ok((base_gap * base_gap + meas_gap).sqrt())
}

/// A type is principal exactly when each residual measure puts all of its
/// mass on the isolated atoms of the spectrum set. Measures with atoms
/// outside the spectrum set are inconsistent with the theory.
pub fn is_principal(p: &TypeDescriptor, theory: &TheoryDescriptor) -> Result<bool> {
    for i in 0..p.n as usize {
        let mu = &p.gram[i][i];
        mu.ensure_positive(crate::measure::NONZERO_TOL)?;
        let mut isolated_mass = 0.0;
        let mut total = 0.0;
        for (_, atom) in mu.atoms() {
            if !theory.contains(atom.point) {
                return Err(Error::InconsistentType {
                    re: atom.point.re,
                    im: atom.point.im,
                });
            }
            total += atom.mass.re;
            if theory.is_isolated_atom(atom.point) {
                isolated_mass += atom.mass.re;
            }
        }
        if (isolated_mass - total).abs() > PRINCIPAL_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A theory is omega-categorical exactly when the spectrum set is finite
/// with no accumulation, i.e. no perfect part and only isolated atoms.
pub fn omega_categorical(theory: &TheoryDescriptor) -> bool {
    theory.perfect.is_empty() && theory.atoms.iter().all(|a| a.isolated)
}

/// Finite net of 1-types over the parameters covering, within `eps` in
/// [`type_distance`], every type of a vector of norm at most `cap`.
///
/// The net is a grid over root masses per spectrum atom (and, when the
/// parameter span is nontrivial, over base coefficients). Grid sizes above
/// [`NET_BUDGET`] are refused with the mesh that would fit.
pub fn epsilon_net(
    model: &SpectralModel,
    params: &[ModelVector],
    param_label: &str,
    eps: f64,
    cap: f64,
) -> Result<Vec<TypeDescriptor>> {
    if !(eps > 0.0) || !(cap > 0.0) {
        return Err(Error::Invalid("net needs eps > 0 and cap > 0".into()));
    }
    let span = closure::dcl_span(model, params)?;
    let d = span.dim();
    let s = model.blocks().len();
    if s == 0 {
        return Err(Error::Invalid("model has no spectrum atoms".into()));
    }

    let (eps_mass, eps_base) = if d == 0 {
        (eps, 0.0)
    } else {
        (eps / 2f64.sqrt(), eps / 2f64.sqrt())
    };
    let h_mass = eps_mass / (2.0 * (s as f64).sqrt());
    let mass_steps = (cap / h_mass).floor() as u64 + 1;
    let base_axes = 2 * d;
    let (h_base, base_steps) = if d == 0 {
        (0.0, 1u64)
    } else {
        let h = eps_base / (2.0 * (base_axes as f64).sqrt());
        (h, 2 * (cap / h).floor() as u64 + 1)
    };

    let mut predicted: u64 = 1;
    for _ in 0..s {
        predicted = predicted.saturating_mul(mass_steps);
    }
    for _ in 0..base_axes {
        predicted = predicted.saturating_mul(base_steps);
    }
    if predicted > NET_BUDGET {
        let dims = (s + base_axes) as f64;
        let achievable = eps * (predicted as f64 / NET_BUDGET as f64).powf(1.0 / dims);
        return Err(Error::NetBudget { eps, achievable });
    }

    let atoms = model.atoms();
    let mut out = Vec::new();
    let mut mass_digits = vec![0u64; s];
    'mass: loop {
        let roots: Vec<f64> = mass_digits.iter().map(|&k| k as f64 * h_mass).collect();
        let norm_sqr: f64 = roots.iter().map(|r| r * r).sum();
        if norm_sqr <= (cap + h_mass) * (cap + h_mass) {
            let measure = AtomicMeasure::from_atoms(
                roots
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| **r > 0.0)
                    .map(|(i, r)| (atoms[i], Complex64::new(r * r, 0.0)))
                    .collect(),
            );
            if d == 0 {
                out.push(TypeDescriptor {
                    n: 1,
                    param_label: param_label.to_string(),
                    base: vec![ModelVector::zero(model.label())],
                    gram: vec![vec![measure]],
                });
            } else {
                let half = (base_steps / 2) as i64;
                let mut base_digits = vec![0i64; base_axes];
                'base: loop {
                    let coefs: Vec<Complex64> = (0..d)
                        .map(|j| {
                            Complex64::new(
                                (base_digits[2 * j] - half) as f64 * h_base,
                                (base_digits[2 * j + 1] - half) as f64 * h_base,
                            )
                        })
                        .collect();
                    let base_norm_sqr: f64 = coefs.iter().map(|z| z.norm_sqr()).sum();
                    if base_norm_sqr + norm_sqr
                        <= (cap + h_mass + h_base) * (cap + h_mass + h_base)
                    {
                        let mut base = ModelVector::zero(model.label());
                        for (j, coef) in coefs.iter().enumerate() {
                            base = base.add(&span.basis()[j].scale(*coef))?;
                        }
                        out.push(TypeDescriptor {
                            n: 1,
                            param_label: param_label.to_string(),
                            base: vec![base],
                            gram: vec![vec![measure.clone()]],
                        });
                    }
                    let mut axis = 0;
                    loop {
                        if axis == base_axes {
                            break 'base;
                        }
                        base_digits[axis] += 1;
                        if base_digits[axis] < base_steps as i64 {
                            break;
                        }
                        base_digits[axis] = 0;
                        axis += 1;
                    }
                }
            }
        }
        let mut axis = 0;
        loop {
            if axis == s {
                break 'mass;
            }
            mass_digits[axis] += 1;
            if mass_digits[axis] < mass_steps {
                break;
            }
            mass_digits[axis] = 0;
            axis += 1;
        }
    }
    Ok(out)
}
