//! Definable and algebraic closure of parameter sets.
//!
//! The definable closure of a finite set `B` is the closed span of the
//! vectors `p(T, T*) b`; over a finitely represented spectrum this equals
//! the span of the per-block restrictions of the `b`s, because interpolation
//! on the atoms realizes every blockwise coefficient pattern. The algebraic
//! closure additionally contains every finite-multiplicity block in full.
//!
//! [`dcl_span`] computes both routes (blockwise restriction, and an
//! operator-word iteration) and verifies that they agree before returning.

use num_complex::Complex64;

use crate::model::{ModelVector, Multiplicity, SpectralModel};
use crate::{Error, Result};

/// Gram-Schmidt drop tolerance: a candidate whose remainder after
/// re-orthogonalization is shorter than this is treated as dependent.
pub const GS_DROP_TOL: f64 = 1e-9;

/// Largest finite block materialized by [`acl_span`].
pub const MATERIALIZE_BUDGET: u32 = 64;

/// Mutual-projection agreement required between the two span routes.
pub const ROUTE_AGREE_TOL: f64 = 1e-8;

/// Orthonormal basis of a closed subspace of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    owner: String,
    basis: Vec<ModelVector>,
}

impl Subspace {
    pub fn empty(owner: &str) -> Subspace {
        Subspace {
            owner: owner.to_string(),
            basis: vec![],
        }
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ModelVector] {
        &self.basis
    }

    /// Orthogonal projection onto the subspace.
    pub fn project(&self, v: &ModelVector) -> Result<ModelVector> {
        let mut out = ModelVector::zero(&self.owner);
        for b in &self.basis {
            let coef = v.inner(b)?;
            out = out.add(&b.scale(coef))?;
        }
        Ok(out)
    }

    /// Distance from `v` to the subspace.
    pub fn dist(&self, v: &ModelVector) -> Result<f64> {
        v.sub(&self.project(v)?).map(|r| r.norm())
    }

    /// Appends `v` if it carries a new direction; re-orthogonalizes twice
    /// before deciding. Returns whether the basis grew.
    pub fn gs_append(&mut self, v: &ModelVector) -> Result<bool> {
        let mut w = v.clone();
        for _ in 0..2 {
            w = w.sub(&self.project(&w)?)?;
        }
        let n = w.norm();
        if n > GS_DROP_TOL {
            self.basis.push(w.scale(Complex64::new(1.0 / n, 0.0)));
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Symmetric subspace distance: worst projection defect of either basis
    /// against the other span.
    pub fn mutual_defect(&self, other: &Subspace) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for b in &self.basis {
            worst = worst.max(other.dist(b)?);
        }
        for b in &other.basis {
            worst = worst.max(self.dist(b)?);
        }
        Ok(worst)
    }
}

/// Span of the blockwise restrictions of the parameter vectors: route one
/// of the definable closure.
pub fn dcl_span_blockwise(model: &SpectralModel, params: &[ModelVector]) -> Result<Subspace> {
    let mut s = Subspace::empty(model.label());
    for block in 0..model.blocks().len() as u32 {
        for p in params {
            model.check_vector(p)?;
            let mut w = ModelVector::zero(model.label());
            for (&(b, i), &val) in p.coords() {
                if b == block {
                    w.set_coord(b, i, val);
                }
            }
            if w.norm_sqr() > 0.0 {
                s.gs_append(&w)?;
            }
        }
    }
    Ok(s)
}

/// Closure of the parameters under the operator and its adjoint: route two
/// of the definable closure.
pub fn dcl_span_iterative(model: &SpectralModel, params: &[ModelVector]) -> Result<Subspace> {
    let mut s = Subspace::empty(model.label());
    for p in params {
        model.check_vector(p)?;
        s.gs_append(p)?;
    }
    let mut next = 0;
    while next < s.dim() {
        let v = s.basis[next].clone();
        let tv = model.apply_t(&v)?;
        s.gs_append(&tv)?;
        let tsv = model.apply_tstar(&v)?;
        s.gs_append(&tsv)?;
        next += 1;
    }
    Ok(s)
}

/// Definable closure subspace. Both routes are computed and must agree
/// within [`ROUTE_AGREE_TOL`]; the blockwise basis is returned.
pub fn dcl_span(model: &SpectralModel, params: &[ModelVector]) -> Result<Subspace> {
    let blockwise = dcl_span_blockwise(model, params)?;
    let iterative = dcl_span_iterative(model, params)?;
    let defect = blockwise.mutual_defect(&iterative)?;
    if defect > ROUTE_AGREE_TOL {
        return Err(Error::Accuracy {
            what: "definable-closure route disagreement",
            value: defect,
            bound: ROUTE_AGREE_TOL,
        });
    }
    Ok(blockwise)
}

/// Algebraic closure subspace: definable closure plus every finite block in
/// full. A finite block larger than [`MATERIALIZE_BUDGET`] is refused.
pub fn acl_span(model: &SpectralModel, params: &[ModelVector]) -> Result<Subspace> {
    let mut s = dcl_span(model, params)?;
    for (idx, block) in model.blocks().iter().enumerate() {
        if let Multiplicity::Finite(m) = block.mult {
            if m > MATERIALIZE_BUDGET {
                return Err(Error::Budget {
                    what: "finite-block materialization",
                    needed: m as u64,
                    budget: MATERIALIZE_BUDGET as u64,
                });
            }
            for j in 0..m {
                let e = ModelVector::unit(model, idx as u32, j)?;
                s.gs_append(&e)?;
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn routes_agree_on_random_instances() {
        let mut rng = testkit::rng(41);
        for round in 0..60 {
            let model = testkit::random_model(&mut rng, 4, 1, 3, &format!("m{round}"));
            let params: Vec<ModelVector> = (0..rng.gen_range(1..3))
                .map(|_| testkit::random_vector(&model, &mut rng, false))
                .collect();
            let a = dcl_span_blockwise(&model, &params).unwrap();
            let b = dcl_span_iterative(&model, &params).unwrap();
            assert_eq!(a.dim(), b.dim());
            assert!(a.mutual_defect(&b).unwrap() <= ROUTE_AGREE_TOL);
        }
    }

    #[test]
    fn span_dimension_counts_touched_blocks() {
        // One vector spread over two blocks spans one direction per block.
        let mut model = testkit::random_model(&mut testkit::rng(5), 1, 1, 0, "m");
        model.allocate_fresh(0).unwrap();
        let model2 = {
            let m = crate::model::SpectralModel::build(
                &[
                    (c(0.25, 0.0), crate::model::Multiplicity::Infinite),
                    (c(-0.5, 0.25), crate::model::Multiplicity::Infinite),
                ],
                "m2",
            )
            .unwrap();
            let mut m = m;
            m.allocate_fresh(0).unwrap();
            m.allocate_fresh(1).unwrap();
            m
        };
        let mut v = ModelVector::zero("m2");
        v.set_coord(0, 0, c(1.0, 0.0));
        v.set_coord(1, 0, c(0.5, 0.5));
        let s = dcl_span(&model2, &[v]).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn projection_is_idempotent_and_contractive() {
        let mut rng = testkit::rng(43);
        let model = testkit::random_model(&mut rng, 3, 1, 3, "m");
        let params: Vec<ModelVector> =
            (0..2).map(|_| testkit::random_vector(&model, &mut rng, false)).collect();
        let s = dcl_span(&model, &params).unwrap();
        for _ in 0..10 {
            let v = testkit::random_vector(&model, &mut rng, false);
            let p = s.project(&v).unwrap();
            let pp = s.project(&p).unwrap();
            assert!(p.dist(&pp).unwrap() < 1e-10);
            assert!(p.norm() <= v.norm() + 1e-10);
        }
    }

    #[test]
    fn acl_contains_finite_blocks_fully() {
        let model = crate::model::SpectralModel::build(
            &[
                (c(0.5, 0.0), crate::model::Multiplicity::Finite(3)),
                (c(-0.5, 0.0), crate::model::Multiplicity::Infinite),
            ],
            "m",
        )
        .unwrap();
        let s = acl_span(&model, &[]).unwrap();
        assert_eq!(s.dim(), 3);
        // Atoms sort by position, so the finite block at 0.5 is index 1.
        for j in 0..3 {
            let e = ModelVector::unit(&model, 1, j).unwrap();
            assert!(s.dist(&e).unwrap() < 1e-10);
        }
    }

    #[test]
    fn acl_budget_error() {
        let model = crate::model::SpectralModel::build(
            &[(c(0.5, 0.0), crate::model::Multiplicity::Finite(65))],
            "m",
        )
        .unwrap();
        assert!(matches!(
            acl_span(&model, &[]),
            Err(Error::Budget { needed: 65, .. })
        ));
    }
}
