//! Acceptance gate: one test per shipped guarantee, each printing a single
//! `ACCEPTANCE nn name: PASS|FAIL` line. Run with
//! `cargo test -p normop-cli --test acceptance -- --nocapture --test-threads=1`
//! to see the lines in order.

#[path = "common/mod.rs"]
mod common;

use std::panic::AssertUnwindSafe;

use normop::calculus::functional_calculus;
use normop::equivalence::{
    aue_align, hausdorff, limit_theory, spectrally_equivalent, TheoryAtom, TheoryDescriptor,
};
use normop::independence::{canonical_base_estimate, free_extension, indep, local_character_witness};
use normop::linalg::{decompose_normal, ComplexMatrix};
use normop::measure::{hellinger_sq, partition_sup_oracle, total_variation_distance, AtomicMeasure};
use normop::model::{BoxRegion, Multiplicity, ModelVector, Region, SpectralModel};
use normop::typespace::{is_principal, omega_categorical, type_distance, type_of};
use normop::{closure, testkit, Complex64};

fn report(num: u32, name: &str, body: impl FnOnce()) {
    match std::panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("ACCEPTANCE {num:02} {name}: PASS"),
        Err(e) => {
            println!("ACCEPTANCE {num:02} {name}: FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn frob_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.sub(b).unwrap().frob_norm()
}

/// 200 random normal matrices (n <= 16, spectrum in the unit disk):
/// reconstruction within 1e-8 Frobenius, unitarity within 1e-9 * n, and the
/// whole batch under five seconds.
#[test]
fn ac01_spectral_reconstruction() {
    report(1, "spectral-reconstruction", || {
        let mut rng = testkit::rng(101);
        let start = std::time::Instant::now();
        for trial in 0..200 {
            let n = 2 + trial % 15; // 2..=16
            let (t, _) = testkit::random_normal_matrix(n, &mut rng);
            let dec = decompose_normal(&t, 1e-8).unwrap();
            let recon = frob_diff(&dec.reconstruct().unwrap(), &t);
            assert!(recon <= 1e-8, "trial {trial}: reconstruction {recon:.3e}");
            let gram = dec.unitary.adjoint().mul(&dec.unitary).unwrap();
            let ortho = frob_diff(&gram, &ComplexMatrix::identity(n));
            assert!(
                ortho <= 1e-9 * n as f64,
                "trial {trial}: unitarity {ortho:.3e} for n = {n}"
            );
        }
        let elapsed = start.elapsed().as_secs_f64();
        assert!(elapsed < 5.0, "batch took {elapsed:.2}s");
    });
}

/// Quantitative almost-eigenvector bound with constant delta = eps * eta/2:
/// whenever |T x - lambda x| < delta for unit x, the distance from x to the
/// range of the spectral projection of the eta-ball is below eps.
#[test]
fn ac02_almost_eigenvector_constant() {
    report(2, "almost-eigenvector-constant", || {
        let grid = [0.05, 0.1, 0.3];
        let mut rng = testkit::rng(202);
        let mut premise_hits = 0u32;
        for trial in 0..1000usize {
            let model = testkit::random_model(&mut rng, 5, 1, 3, "m");
            let eps = grid[trial % 3];
            let eta = grid[(trial / 3) % 3];
            let delta = eps * (eta / 2.0);

            // Concentrate x near one atom; lambda sits within delta of it
            // often enough that the premise fires in a good share of trials.
            let nb = model.blocks().len();
            let target = trial % nb;
            let lambda = model.blocks()[target].lambda
                + Complex64::from_polar(
                    0.7 * delta * testkit::uniform(&mut rng, 0.0, 1.0),
                    testkit::uniform(&mut rng, 0.0, std::f64::consts::TAU),
                );
            let spread = testkit::uniform(&mut rng, 0.0, 0.5);
            let mut x = ModelVector::zero(model.label());
            x.set_coord(target as u32, 0, c((1.0 - spread * spread).sqrt(), 0.0));
            let other = (target + 1) % nb;
            if other != target {
                x.set_coord(other as u32, 0, c(spread, 0.0));
            }
            let n = x.norm();
            let x = x.scale(c(1.0 / n, 0.0));

            let tx = model.apply_t(&x).unwrap();
            let defect = tx.sub(&x.scale(lambda)).unwrap().norm();
            if defect < delta {
                premise_hits += 1;
                let ball = model.atoms_within(lambda, eta);
                let proj = model.spectral_projection(&x, &ball).unwrap();
                let dist = x.dist(&proj).unwrap();
                assert!(
                    dist < eps,
                    "trial {trial}: defect {defect:.3e} < {delta:.3e} but distance {dist:.3e} >= {eps}"
                );
            }
        }
        assert!(premise_hits >= 200, "only {premise_hits} non-vacuous trials");
    });
}

/// Scalar-measure bounds on 1000 random vector pairs: total variation of
/// mu_{v,w} at most |v| |w|, and mu_v has total mass exactly |v|^2.
#[test]
fn ac03_scalar_measure_bounds() {
    report(3, "scalar-measure-bounds", || {
        let mut rng = testkit::rng(303);
        let mut model = testkit::random_model(&mut rng, 5, 1, 3, "m");
        for trial in 0..1000 {
            if trial % 50 == 0 {
                model = testkit::random_model(&mut rng, 5, 1, 3, "m");
            }
            let v = testkit::random_vector(&model, &mut rng, false);
            let w = testkit::random_vector(&model, &mut rng, false);
            let mu_vw = model.scalar_measure(&v, &w).unwrap();
            assert!(
                mu_vw.total_variation() <= v.norm() * w.norm() + 1e-12,
                "trial {trial}: TV {} > {}",
                mu_vw.total_variation(),
                v.norm() * w.norm()
            );
            let mu_v = model.scalar_measure(&v, &v).unwrap();
            let mass = mu_v.total_mass();
            assert!(
                (mass.re - v.norm_sqr()).abs() <= 1e-12 && mass.im.abs() <= 1e-12,
                "trial {trial}: mass {mass} vs norm^2 {}",
                v.norm_sqr()
            );
        }
    });
}

/// Riemann sums of z^2 against the projection-valued measure: the exact
/// operator error stays below the worst oscillation of the integrand over
/// any occupied cell, for cell diameters 0.2, 0.1, 0.05.
#[test]
fn ac04_riemann_sum_bound() {
    report(4, "riemann-sum-bound", || {
        let phi = |z: Complex64| z * z;
        let mut rng = testkit::rng(404);
        let mut atoms: Vec<Complex64> = Vec::new();
        while atoms.len() < 10 {
            let z = testkit::unit_disk_point(&mut rng);
            if atoms.iter().all(|a| (a - z).norm() > 0.01) {
                atoms.push(z);
            }
        }
        let spec: Vec<(Complex64, Multiplicity)> = atoms
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let m = if i == 0 {
                    Multiplicity::Infinite
                } else {
                    Multiplicity::Finite(1 + (i as u32 % 3))
                };
                (*z, m)
            })
            .collect();
        let model = SpectralModel::build(&spec, "m").unwrap();

        for diam in [0.2, 0.1, 0.05] {
            let side = diam / 2f64.sqrt();
            let lo = -1.2;
            let ncells = ((2.4) / side).ceil() as usize;
            let mut cells = Vec::new();
            let mut samples = Vec::new();
            for i in 0..ncells {
                for j in 0..ncells {
                    let x0 = lo + i as f64 * side;
                    let y0 = lo + j as f64 * side;
                    cells.push(Region {
                        atoms: vec![],
                        boxes: vec![BoxRegion {
                            x0,
                            x1: x0 + side,
                            y0,
                            y1: y0 + side,
                        }],
                    });
                    samples.push(c(x0 + side / 2.0, y0 + side / 2.0));
                }
            }
            let integ = model.integrate_pvm(phi, &cells, &samples).unwrap();

            // Independent recomputation of the operator error, block by block.
            let mut op_err = 0.0f64;
            for (b, block) in model.blocks().iter().enumerate() {
                let coeff = integ.op.coeffs[b];
                op_err = op_err.max((phi(block.lambda) - coeff).norm());
            }
            assert_eq!(op_err, integ.sup_error, "diam {diam}: reported error drifted");

            // Worst oscillation of phi over any cell holding an atom, taken
            // over a point set that includes the atom and the cell sample.
            let mut max_osc = 0.0f64;
            for (ci, cell) in cells.iter().enumerate() {
                let members: Vec<Complex64> = model
                    .atoms()
                    .into_iter()
                    .filter(|z| cell.contains(*z))
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let b = cell.boxes[0];
                let mut pts = members;
                pts.push(samples[ci]);
                for gi in 0..6 {
                    for gj in 0..6 {
                        pts.push(c(
                            b.x0 + (b.x1 - b.x0) * gi as f64 / 5.0,
                            b.y0 + (b.y1 - b.y0) * gj as f64 / 5.0,
                        ));
                    }
                }
                for p in &pts {
                    for q in &pts {
                        max_osc = max_osc.max((phi(*p) - phi(*q)).norm());
                    }
                }
            }
            assert!(
                integ.sup_error <= max_osc,
                "diam {diam}: error {:.3e} above max-cell oscillation {max_osc:.3e}",
                integ.sup_error
            );
        }
    });
}

/// The closed-form type-metric square agrees with the exhaustive partition
/// supremum on 300 random measure pairs; the orthonormal sqrt(2) and mixed
/// 2 - sqrt(2) cases come out exactly; the square never beats the total
/// variation gap.
#[test]
fn ac05_type_metric_oracle() {
    report(5, "type-metric-oracle", || {
        let mut rng = testkit::rng(505);
        for trial in 0..300 {
            let n = 1 + (testkit::uniform(&mut rng, 0.0, 8.0).floor() as usize).min(7);
            let mut pool: Vec<Complex64> = Vec::new();
            while pool.len() < n {
                let z = testkit::unit_disk_point(&mut rng);
                if pool.iter().all(|a| (a - z).norm() > 1e-6) {
                    pool.push(z);
                }
            }
            let mu = testkit::random_positive_measure(&pool, &mut rng);
            let nu = testkit::random_positive_measure(&pool, &mut rng);
            let closed = hellinger_sq(&mu, &nu).unwrap();
            let oracle = partition_sup_oracle(&mu, &nu).unwrap();
            assert!(
                (closed - oracle).abs() <= 1e-12,
                "trial {trial}: closed form {closed} vs oracle {oracle}"
            );
            let tv = total_variation_distance(&mu, &nu);
            assert!(
                closed <= tv + 1e-12,
                "trial {trial}: metric square {closed} above TV {tv}"
            );
        }

        // Frozen cases, checked through the full type metric: orthonormal
        // point masses sit at distance sqrt(2); splitting half the mass onto
        // a second atom gives squared distance 2 - sqrt(2).
        let m = SpectralModel::build(
            &[
                (c(0.0, 0.0), Multiplicity::Finite(1)),
                (c(1.0, 0.0), Multiplicity::Finite(1)),
            ],
            "frozen",
        )
        .unwrap();
        let v0 = ModelVector::unit(&m, 0, 0).unwrap();
        let v1 = ModelVector::unit(&m, 1, 0).unwrap();
        let h = 0.5f64.sqrt();
        let mixed_v = v0.scale(c(h, 0.0)).add(&v1.scale(c(h, 0.0))).unwrap();
        let p = type_of(&m, &[v0], &[], "").unwrap();
        let q = type_of(&m, &[v1], &[], "").unwrap();
        let r = type_of(&m, &[mixed_v], &[], "").unwrap();
        let d_pq = type_distance(&p, &q).unwrap();
        assert!((d_pq - 2f64.sqrt()).abs() <= 1e-12, "orthonormal case: {d_pq}");
        let d_pr = type_distance(&p, &r).unwrap();
        assert!(
            (d_pr * d_pr - (2.0 - 2f64.sqrt())).abs() <= 1e-12,
            "mixed case: {}",
            d_pr * d_pr
        );

        // The same frozen values through the raw measures and the oracle.
        let unit = |z: Complex64| AtomicMeasure::from_atoms(vec![(z, c(1.0, 0.0))]);
        let mixed = AtomicMeasure::from_atoms(vec![
            (c(0.0, 0.0), c(0.5, 0.0)),
            (c(1.0, 0.0), c(0.5, 0.0)),
        ]);
        let d_sq = hellinger_sq(&unit(c(0.0, 0.0)), &unit(c(1.0, 0.0))).unwrap();
        assert!((d_sq.sqrt() - 2f64.sqrt()).abs() <= 1e-12);
        let d_sq = hellinger_sq(&unit(c(0.0, 0.0)), &mixed).unwrap();
        assert!((d_sq - (2.0 - 2f64.sqrt())).abs() <= 1e-12);
        let oracle = partition_sup_oracle(&unit(c(0.0, 0.0)), &mixed).unwrap();
        assert!((oracle - (2.0 - 2f64.sqrt())).abs() <= 1e-12);
    });
}

/// Triangle inequality for the type metric on 1000 random measure triples.
#[test]
fn ac06_metric_triangle() {
    report(6, "metric-triangle", || {
        let mut rng = testkit::rng(606);
        for trial in 0..1000 {
            let n = 1 + (testkit::uniform(&mut rng, 0.0, 6.0).floor() as usize).min(5);
            let mut pool: Vec<Complex64> = Vec::new();
            while pool.len() < n {
                let z = testkit::unit_disk_point(&mut rng);
                if pool.iter().all(|a| (a - z).norm() > 1e-6) {
                    pool.push(z);
                }
            }
            let p = testkit::random_positive_measure(&pool, &mut rng);
            let q = testkit::random_positive_measure(&pool, &mut rng);
            let r = testkit::random_positive_measure(&pool, &mut rng);
            let d_pr = hellinger_sq(&p, &r).unwrap().sqrt();
            let d_pq = hellinger_sq(&p, &q).unwrap().sqrt();
            let d_qr = hellinger_sq(&q, &r).unwrap().sqrt();
            assert!(
                d_pr <= d_pq + d_qr + 1e-12,
                "trial {trial}: {d_pr} > {d_pq} + {d_qr}"
            );
        }
    });
}

/// Forking calculus on 200 random instances over models with at least two
/// infinite blocks: symmetry, transitivity over nested parameter sets,
/// stationarity of free extensions, the constructive local-character bound,
/// and type preservation under free extension.
#[test]
fn ac07_forking_calculus() {
    report(7, "forking-calculus", || {
        let tol = 1e-8;
        let mut rng = testkit::rng(707);
        for trial in 0..200 {
            let model = testkit::random_model(&mut rng, 5, 2, 4, "m");
            let b1 = testkit::random_vector(&model, &mut rng, false);
            let b2 = testkit::random_vector(&model, &mut rng, false);
            let b3 = testkit::random_vector(&model, &mut rng, false);
            let mut a = testkit::random_vector(&model, &mut rng, false);
            if trial % 3 == 0 {
                // Mix in a parameter direction so dependence also occurs.
                a = a.add(&b2.scale(c(0.8, 0.3))).unwrap();
            }
            let set_b = vec![b1.clone()];
            let set_c = vec![b1.clone(), b2.clone()];
            let set_d = vec![b1.clone(), b2.clone(), b3.clone()];

            // Symmetry.
            let forward = indep(&model, &[a.clone()], &set_b, &[b3.clone()], tol).unwrap();
            let backward = indep(&model, &[b3.clone()], &set_b, &[a.clone()], tol).unwrap();
            assert_eq!(
                forward.independent, backward.independent,
                "trial {trial}: symmetry broke ({:?} vs {:?})",
                forward.residuals, backward.residuals
            );

            // Transitivity over B within C within D.
            let f_bd = indep(&model, &[a.clone()], &set_b, &set_d, tol).unwrap();
            let f_bc = indep(&model, &[a.clone()], &set_b, &set_c, tol).unwrap();
            let f_cd = indep(&model, &[a.clone()], &set_c, &set_d, tol).unwrap();
            assert_eq!(
                f_bd.independent,
                f_bc.independent && f_cd.independent,
                "trial {trial}: transitivity broke"
            );

            // Free extension preserves the type over B.
            let (ext1, a1) = free_extension(&model, &a, &set_b, &set_c).unwrap();
            let p_old = type_of(&model, &[a.clone()], &set_b, "B").unwrap();
            let p_new = type_of(&ext1, &[a1.clone()], &set_b, "B").unwrap();
            assert!(
                p_old.approx_eq(&p_new, 1e-10).unwrap(),
                "trial {trial}: free extension changed the type"
            );
            let gained = indep(&ext1, &[a1.clone()], &set_b, &set_c, tol).unwrap();
            assert!(gained.independent, "trial {trial}: extension not independent");

            // Stationarity: a second realization of the same type over B,
            // freely extended with shifted fresh coordinates, has the same
            // type over B union C.
            let span_b = closure::acl_span(&model, &set_b).unwrap();
            let base = span_b.project(&a).unwrap();
            let resid = a.sub(&base).unwrap();
            let phase = Complex64::from_polar(1.0, testkit::uniform(&mut rng, 0.0, 6.28));
            let a_twin = base.add(&resid.scale(phase)).unwrap();
            let mut model2 = model.clone();
            for b in 0..model2.blocks().len() {
                if model2.blocks()[b].mult == Multiplicity::Infinite {
                    model2.allocate_fresh(b as u32).unwrap();
                }
            }
            let (ext2, a2) = free_extension(&model2, &a_twin, &set_b, &set_c).unwrap();
            let ty1 = type_of(&ext1, &[a1.clone()], &set_c, "BC").unwrap();
            let ty2 = type_of(&ext2, &[a2.clone()], &set_c, "BC").unwrap();
            assert!(
                ty1.approx_eq(&ty2, tol).unwrap(),
                "trial {trial}: stationarity broke"
            );

            // Local character: the projection alone supports independence,
            // and a prefix of the parameters carries a nearby realization.
            let p_full = closure::acl_span(&model, &set_d).unwrap().project(&a).unwrap();
            let over_proj = indep(&model, &[a.clone()], &[p_full], &set_d, tol).unwrap();
            assert!(
                over_proj.independent,
                "trial {trial}: projection parameter fails ({:?})",
                over_proj.residuals
            );
            let eps = [0.05, 0.1, 0.3][trial % 3];
            let w = local_character_witness(&model, &a, &set_d, eps).unwrap();
            assert!(w.distance < eps, "trial {trial}: witness distance {}", w.distance);
            let sub = &set_d[..w.subset.len()];
            let over_prefix = indep(&model, &[w.a_prime.clone()], sub, &set_d, tol).unwrap();
            assert!(
                over_prefix.independent,
                "trial {trial}: prefix witness not independent ({:?})",
                over_prefix.residuals
            );
            assert!(w.a_prime.dist(&a).unwrap() < eps + 1e-12);
        }
    });
}

/// Cesaro law: the Morley-sequence mean deviates from the projection by
/// exactly |a - P_B a| / sqrt(m), within 1e-10, for m in {1, 4, 16, 64}.
#[test]
fn ac08_cesaro_law() {
    report(8, "cesaro-law", || {
        let mut rng = testkit::rng(808);
        for trial in 0..10 {
            let model = testkit::random_model(&mut rng, 4, 2, 4, "m");
            let a = testkit::random_vector(&model, &mut rng, false);
            let b = vec![testkit::random_vector(&model, &mut rng, false)];
            for m in [1usize, 4, 16, 64] {
                let rep = canonical_base_estimate(&model, &a, &b, m).unwrap();
                assert!(
                    (rep.deviation - rep.law).abs() <= 1e-10,
                    "trial {trial}, m = {m}: measured {} vs law {}",
                    rep.deviation,
                    rep.law
                );
            }
        }
    });
}

fn iso(re: f64, im: f64, m: Multiplicity) -> TheoryAtom {
    TheoryAtom {
        lambda: c(re, im),
        mult: Some(m),
        isolated: true,
    }
}

/// Limit theories: the {0, 1/i} sequence collapses to a single double atom
/// at the origin, and compactness-witness sequences for three hand-built
/// descriptors (finite spectrum; spectrum with an accumulation segment;
/// spectrum with an infinite-multiplicity atom) recover their descriptors
/// with set error below the final net radius and exact multiplicities.
#[test]
fn ac09_limit_theories() {
    report(9, "limit-theories", || {
        // 1. The merging pair {0, 1/i}.
        let seq: Vec<SpectralModel> = (1..=64)
            .map(|i| {
                SpectralModel::build(
                    &[
                        (c(0.0, 0.0), Multiplicity::Finite(1)),
                        (c(1.0 / i as f64, 0.0), Multiplicity::Finite(1)),
                    ],
                    &format!("s{i}"),
                )
                .unwrap()
            })
            .collect();
        let (th, _) = limit_theory(&seq, &[1.0, 0.5, 0.25], 0.1).unwrap();
        assert_eq!(th.atoms.len(), 1, "merging pair left {} atoms", th.atoms.len());
        assert!(th.atoms[0].lambda.norm() <= 1.0 / 64.0);
        assert!(th.atoms[0].isolated);
        assert_eq!(th.atoms[0].mult, Some(Multiplicity::Finite(2)));

        // 2. Finite spectrum, three atoms, multiplicities 1 / 2 / 5.
        let d1 = TheoryDescriptor {
            atoms: vec![
                iso(0.3, 0.4, Multiplicity::Finite(1)),
                iso(-0.5, 0.0, Multiplicity::Finite(2)),
                iso(0.1, -0.6, Multiplicity::Finite(5)),
            ],
            perfect: vec![],
        };
        let wit = d1.witness_sequence(12, "w").unwrap();
        let (rec, _) = limit_theory(&wit, &[0.25, 0.125, 1.0 / 12.0], 0.1).unwrap();
        let rec_pts: Vec<Complex64> = rec.atoms.iter().map(|a| a.lambda).collect();
        assert!(hausdorff(&rec_pts, &d1.sample_points(12)) <= 1.0 / 12.0);
        for orig in &d1.atoms {
            let hit = rec
                .atoms
                .iter()
                .find(|a| (a.lambda - orig.lambda).norm() <= 1.0 / 12.0)
                .expect("atom recovered");
            assert!(hit.isolated);
            assert_eq!(hit.mult, orig.mult, "multiplicity at {}", orig.lambda);
        }

        // 3. An isolated triple atom next to an accumulation segment.
        let d2 = TheoryDescriptor {
            atoms: vec![iso(0.75, 0.0, Multiplicity::Finite(3))],
            perfect: vec![BoxRegion {
                x0: -0.2,
                x1: 0.2,
                y0: 0.0,
                y1: 0.0,
            }],
        };
        let wit = d2.witness_sequence(64, "w").unwrap();
        let (rec, _) = limit_theory(&wit, &[0.3, 0.1, 1.0 / 64.0], 0.1).unwrap();
        let rec_pts: Vec<Complex64> = rec.atoms.iter().map(|a| a.lambda).collect();
        assert!(hausdorff(&rec_pts, &d2.sample_points(64)) <= 1.0 / 64.0);
        let isolated: Vec<&TheoryAtom> = rec.atoms.iter().filter(|a| a.isolated).collect();
        assert_eq!(isolated.len(), 1, "exactly the triple atom stays isolated");
        assert!((isolated[0].lambda - c(0.75, 0.0)).norm() <= 1.0 / 64.0);
        assert_eq!(isolated[0].mult, Some(Multiplicity::Finite(3)));
        for a in rec.atoms.iter().filter(|a| !a.isolated) {
            assert!(a.mult.is_none());
            assert!(a.lambda.re >= -0.2 - 1e-9 && a.lambda.re <= 0.2 + 1e-9);
            assert!(a.lambda.im.abs() <= 1e-9);
        }

        // 4. An infinite-multiplicity isolated atom.
        let d3 = TheoryDescriptor {
            atoms: vec![
                iso(0.2, 0.0, Multiplicity::Infinite),
                iso(-0.6, 0.0, Multiplicity::Finite(1)),
            ],
            perfect: vec![],
        };
        let wit = d3.witness_sequence(96, "w").unwrap();
        let (rec, _) = limit_theory(&wit, &[0.3, 0.1, 1.0 / 96.0], 0.1).unwrap();
        let rec_pts: Vec<Complex64> = rec.atoms.iter().map(|a| a.lambda).collect();
        assert!(hausdorff(&rec_pts, &d3.sample_points(96)) <= 1.0 / 96.0);
        for orig in &d3.atoms {
            let hit = rec
                .atoms
                .iter()
                .find(|a| (a.lambda - orig.lambda).norm() <= 1.0 / 96.0)
                .expect("atom recovered");
            assert!(hit.isolated);
            assert_eq!(hit.mult, orig.mult, "multiplicity at {}", orig.lambda);
        }
    });
}

/// Alignment: exact copies align with residual zero, spectra jittered by at
/// most 1e-3 align with residual at most the jitter, and the residual is
/// symmetric to 1e-12.
#[test]
fn ac10_approximate_unitary_alignment() {
    report(10, "approximate-unitary-alignment", || {
        let jitter_cap = 1e-3;
        let mut rng = testkit::rng(1010);
        for trial in 0..100 {
            let a = testkit::random_model(&mut rng, 5, 1, 2, "a");
            let spec: Vec<(Complex64, Multiplicity)> =
                a.blocks().iter().map(|b| (b.lambda, b.mult)).collect();
            let b = SpectralModel::build(&spec, "b").unwrap();
            let exact = aue_align(&a, &b).unwrap();
            assert_eq!(exact.residual, 0.0, "trial {trial}: exact alignment drifted");

            let jittered: Vec<(Complex64, Multiplicity)> = spec
                .iter()
                .map(|(z, m)| {
                    let r = jitter_cap * testkit::uniform(&mut rng, 0.0, 1.0);
                    let th = testkit::uniform(&mut rng, 0.0, std::f64::consts::TAU);
                    (z + Complex64::from_polar(r, th), *m)
                })
                .collect();
            let bj = SpectralModel::build(&jittered, "bj").unwrap();
            let forward = aue_align(&a, &bj).unwrap();
            assert!(
                forward.residual <= jitter_cap + 1e-12,
                "trial {trial}: residual {} above jitter bound",
                forward.residual
            );
            let backward = aue_align(&bj, &a).unwrap();
            assert!(
                (forward.residual - backward.residual).abs() <= 1e-12,
                "trial {trial}: asymmetric residual"
            );
        }
    });
}

/// Functional calculus preserves spectral equivalence for the square,
/// squared-modulus, and a Moebius map, and composing two maps blockwise
/// agrees exactly with applying the composite.
#[test]
fn ac11_calculus_preserves_equivalence() {
    report(11, "calculus-preserves-equivalence", || {
        let mobius = |z: Complex64| (z - c(0.3, 0.0)) / (c(1.0, 0.0) - z * c(0.3, 0.0));
        let square = |z: Complex64| z * z;
        let modsq = |z: Complex64| c(z.norm_sqr(), 0.0);
        let mut rng = testkit::rng(1111);
        for trial in 0..100 {
            let a = testkit::random_model(&mut rng, 5, 1, 2, "a");
            let spec: Vec<(Complex64, Multiplicity)> =
                a.blocks().iter().map(|b| (b.lambda, b.mult)).collect();
            let mut b = SpectralModel::build(&spec, "b").unwrap();
            for blk in 0..b.blocks().len() {
                if b.blocks()[blk].mult == Multiplicity::Infinite {
                    b.allocate_fresh(blk as u32).unwrap();
                }
            }
            assert!(spectrally_equivalent(&a, &b, 1e-8).equivalent);
            for (name, f) in [
                ("square", &square as &dyn Fn(Complex64) -> Complex64),
                ("modsq", &modsq),
                ("mobius", &mobius),
            ] {
                let fa = functional_calculus(&a, f, "fa").unwrap();
                let fb = functional_calculus(&b, f, "fb").unwrap();
                assert!(
                    spectrally_equivalent(&fa, &fb, 1e-8).equivalent,
                    "trial {trial}: {name} broke equivalence"
                );
            }

            // Blockwise composition: mapping twice equals mapping once with
            // the composite, bit for bit on every block.
            let staged =
                functional_calculus(&functional_calculus(&a, &mobius, "g").unwrap(), &square, "fg")
                    .unwrap();
            let direct = functional_calculus(
                &a,
                |z| {
                    let w = mobius(z);
                    w * w
                },
                "h",
            )
            .unwrap();
            assert_eq!(staged.blocks().len(), direct.blocks().len());
            for (x, y) in staged.blocks().iter().zip(direct.blocks()) {
                assert_eq!(x.lambda, y.lambda, "trial {trial}: composite atom drifted");
                assert_eq!(x.mult, y.mult);
            }
        }
    });
}

/// Countable-categoricity matches the finite-spectrum criterion on 20
/// descriptors, and principality matches the isolated-mass criterion on 50
/// constructed types plus three worked examples.
#[test]
fn ac12_categoricity_and_principal_types() {
    report(12, "categoricity-and-principal-types", || {
        // Categoricity: finite, all-isolated spectra and nothing else.
        for t in 0..20u32 {
            let mut atoms = vec![
                iso(0.1 * t as f64 - 0.9, 0.0, Multiplicity::Finite(1 + t % 3)),
                iso(0.05 * t as f64, 0.5, Multiplicity::Infinite),
            ];
            let mut perfect = vec![];
            let expect = match t % 4 {
                1 => {
                    atoms.push(TheoryAtom {
                        lambda: c(0.0, -0.5),
                        mult: None,
                        isolated: false,
                    });
                    false
                }
                3 => {
                    perfect.push(BoxRegion {
                        x0: -0.1,
                        x1: 0.1,
                        y0: -0.1,
                        y1: 0.1,
                    });
                    false
                }
                _ => true,
            };
            let th = TheoryDescriptor { atoms, perfect };
            th.validate().unwrap();
            assert_eq!(omega_categorical(&th), expect, "descriptor {t}");
        }

        // Principality: mass off the isolated atoms decides it.
        let theory = TheoryDescriptor {
            atoms: vec![
                iso(0.5, 0.0, Multiplicity::Finite(2)),
                iso(-0.5, 0.25, Multiplicity::Infinite),
                TheoryAtom {
                    lambda: c(0.0, 0.0),
                    mult: None,
                    isolated: false,
                },
            ],
            perfect: vec![],
        };
        let model = SpectralModel::build(
            &[
                (c(0.5, 0.0), Multiplicity::Finite(2)),
                (c(-0.5, 0.25), Multiplicity::Infinite),
                (c(0.0, 0.0), Multiplicity::Infinite),
            ],
            "m",
        )
        .unwrap();
        let mut model = model;
        for b in 0..model.blocks().len() {
            if model.blocks()[b].mult == Multiplicity::Infinite {
                model.allocate_fresh(b as u32).unwrap();
            }
        }
        let iso_block = model.block_index(c(0.5, 0.0)).unwrap();
        let inf_block = model.block_index(c(-0.5, 0.25)).unwrap();
        let acc_block = model.block_index(c(0.0, 0.0)).unwrap();
        let mut rng = testkit::rng(1212);
        for t in 0..50u32 {
            let mut v = ModelVector::zero(model.label());
            v.set_coord(iso_block, 0, c(testkit::uniform(&mut rng, 0.2, 1.0), 0.1));
            v.set_coord(inf_block, 0, c(0.0, testkit::uniform(&mut rng, 0.2, 1.0)));
            let expect = t % 2 == 0;
            if !expect {
                v.set_coord(acc_block, 0, c(testkit::uniform(&mut rng, 0.3, 1.0), 0.0));
            }
            let p = type_of(&model, &[v.clone()], &[], "").unwrap();
            assert_eq!(is_principal(&p, &theory).unwrap(), expect, "type {t}");
            if expect {
                let iso_mass: f64 = p.gram[0][0]
                    .atoms()
                    .filter(|(_, a)| theory.is_isolated_atom(a.point))
                    .map(|(_, a)| a.mass.re)
                    .sum();
                assert!((iso_mass - v.norm_sqr()).abs() <= 1e-9, "type {t}: mass split");
            }
        }

        // Worked example: the point mass at an isolated 1/2 is principal.
        let th1 = TheoryDescriptor {
            atoms: vec![iso(0.5, 0.0, Multiplicity::Finite(1))],
            perfect: vec![],
        };
        let m1 = SpectralModel::build(&[(c(0.5, 0.0), Multiplicity::Finite(1))], "m1").unwrap();
        let v1 = ModelVector::unit(&m1, 0, 0).unwrap();
        let p1 = type_of(&m1, &[v1], &[], "").unwrap();
        assert!(is_principal(&p1, &th1).unwrap());

        // Worked example: the point mass at an accumulation point is not.
        let th2 = TheoryDescriptor {
            atoms: vec![
                iso(0.5, 0.0, Multiplicity::Finite(1)),
                TheoryAtom {
                    lambda: c(0.0, 0.0),
                    mult: None,
                    isolated: false,
                },
            ],
            perfect: vec![],
        };
        let m2 = SpectralModel::build(
            &[
                (c(0.0, 0.0), Multiplicity::Infinite),
                (c(0.5, 0.0), Multiplicity::Finite(1)),
            ],
            "m2",
        )
        .unwrap();
        let mut m2 = m2;
        m2.allocate_fresh(m2.block_index(c(0.0, 0.0)).unwrap()).unwrap();
        let v2 = ModelVector::unit(&m2, m2.block_index(c(0.0, 0.0)).unwrap(), 0).unwrap();
        let p2 = type_of(&m2, &[v2], &[], "").unwrap();
        assert!(!is_principal(&p2, &th2).unwrap());

        // Worked example: dyadic masses spread over isolated atoms 1/n stay
        // principal even as the support walks toward the accumulation point.
        let n_terms = 10u32;
        let mut spec: Vec<(Complex64, Multiplicity)> = (1..=n_terms + 1)
            .map(|n| (c(1.0 / n as f64, 0.0), Multiplicity::Finite(1)))
            .collect();
        spec.push((c(0.0, 0.0), Multiplicity::Infinite));
        let m3 = SpectralModel::build(&spec, "m3").unwrap();
        let th3 = TheoryDescriptor {
            atoms: (1..=n_terms + 1)
                .map(|n| iso(1.0 / n as f64, 0.0, Multiplicity::Finite(1)))
                .chain(std::iter::once(TheoryAtom {
                    lambda: c(0.0, 0.0),
                    mult: None,
                    isolated: false,
                }))
                .collect(),
            perfect: vec![],
        };
        th3.validate().unwrap();
        let mut v3 = ModelVector::zero(m3.label());
        for n in 1..=n_terms {
            let block = m3.block_index(c(1.0 / n as f64, 0.0)).unwrap();
            v3.set_coord(block, 0, c(0.5f64.powi(n as i32).sqrt(), 0.0));
        }
        let tail_block = m3.block_index(c(1.0 / (n_terms + 1) as f64, 0.0)).unwrap();
        v3.set_coord(tail_block, 0, c(0.5f64.powi(n_terms as i32).sqrt(), 0.0));
        assert!((v3.norm_sqr() - 1.0).abs() <= 1e-12);
        let p3 = type_of(&m3, &[v3], &[], "").unwrap();
        assert!(is_principal(&p3, &th3).unwrap());
    });
}

/// The whole golden-fixture suite produces byte-identical stdout and stable
/// exit codes across repeated runs and across concurrent invocations, and
/// matches the pinned files.
#[test]
fn ac13_cli_determinism() {
    report(13, "cli-determinism", || {
        let run_all = || -> Vec<(i32, Vec<u8>)> {
            common::FIXTURES
                .iter()
                .map(|fx| {
                    let out = common::run_fixture(fx);
                    (out.status.code().unwrap_or(-1), out.stdout)
                })
                .collect()
        };
        let first = run_all();
        let second = run_all();
        assert_eq!(first, second, "sequential reruns diverged");

        for threads in [2usize, 8] {
            let results: Vec<Vec<(i32, Vec<u8>)>> = std::thread::scope(|scope| {
                (0..threads)
                    .map(|_| scope.spawn(run_all))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .map(|h| h.join().expect("runner thread"))
                    .collect()
            });
            for r in results {
                assert_eq!(first, r, "concurrent run with {threads} threads diverged");
            }
        }

        for (fx, (code, stdout)) in common::FIXTURES.iter().zip(&first) {
            assert_eq!(*code, fx.exit, "{}: exit code drifted", fx.name);
            let pinned = std::fs::read(common::expected_path(fx))
                .unwrap_or_else(|e| panic!("missing pinned output for {}: {e}", fx.name));
            assert_eq!(*stdout, pinned, "{}: pinned bytes drifted", fx.name);
        }
    });
}
