//! Atomic complex measures on the plane and the distances between them.
//!
//! Masses are indexed by canonically rounded atoms. The distance used by the
//! type space is the supremum, over measurable partitions, of a squared
//! difference of square-root masses; for atomic measures that supremum is
//! attained at the partition into singletons, giving a closed form. Both
//! routes are implemented: the closed form for production use and an
//! exhaustive partition search as an independent oracle for small supports.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::de::Error as SerdeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::common::{atom_key, is_finite_c, AtomKey};
use crate::{Error, Result};

/// Masses below this threshold are dropped during normalization.
pub const MASS_EPS: f64 = 1e-14;

/// Largest union support for the exhaustive partition oracle.
pub const PARTITION_ORACLE_LIMIT: usize = 10;

/// Deepest dyadic resolution for weak-star testing.
pub const DYADIC_LEVEL_CAP: u32 = 8;

/// Default threshold deciding whether a mass counts as nonzero.
pub const NONZERO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassAtom {
    pub point: Complex64,
    pub mass: Complex64,
}

/// Finitely supported complex measure; atoms keyed by canonical rounding,
/// masses below [`MASS_EPS`] dropped.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: BTreeMap<AtomKey, MassAtom>,
}

impl AtomicMeasure {
    pub fn empty() -> AtomicMeasure {
        AtomicMeasure::default()
    }

    /// Accumulates `(point, mass)` pairs, merging atoms that round together.
    pub fn from_atoms(entries: Vec<(Complex64, Complex64)>) -> AtomicMeasure {
        let mut m = AtomicMeasure::default();
        for (p, mass) in entries {
            m.add_mass(p, mass);
        }
        m.normalize();
        m
    }

    pub fn add_mass(&mut self, point: Complex64, mass: Complex64) {
        let key = atom_key(point);
        let e = self.atoms.entry(key).or_insert(MassAtom {
            point,
            mass: Complex64::new(0.0, 0.0),
        });
        e.mass += mass;
    }

    /// Drops atoms whose mass modulus is at most [`MASS_EPS`].
    pub fn normalize(&mut self) {
        self.atoms.retain(|_, a| a.mass.norm() > MASS_EPS);
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&AtomKey, &MassAtom)> {
        self.atoms.iter()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass_at(&self, point: Complex64) -> Complex64 {
        self.atoms
            .get(&atom_key(point))
            .map(|a| a.mass)
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn support(&self) -> Vec<Complex64> {
        self.atoms.values().map(|a| a.point).collect()
    }

    /// Sum of mass moduli.
    pub fn total_variation(&self) -> f64 {
        self.atoms.values().map(|a| a.mass.norm()).sum()
    }

    /// Plain (signed, complex) total mass.
    pub fn total_mass(&self) -> Complex64 {
        self.atoms
            .values()
            .fold(Complex64::new(0.0, 0.0), |acc, a| acc + a.mass)
    }

    /// Mass of a region under the half-open box / rounded-atom semantics.
    pub fn mass_of_region(&self, region: &crate::model::Region) -> Complex64 {
        self.atoms
            .values()
            .filter(|a| region.contains(a.point))
            .fold(Complex64::new(0.0, 0.0), |acc, a| acc + a.mass)
    }

    /// Errors unless every mass is real nonnegative within `tol`.
    pub fn ensure_positive(&self, tol: f64) -> Result<()> {
        for a in self.atoms.values() {
            if a.mass.im.abs() > tol || a.mass.re < -tol {
                return Err(Error::Positivity {
                    re: a.point.re,
                    im: a.point.im,
                    mass_re: a.mass.re,
                    mass_im: a.mass.im,
                });
            }
        }
        Ok(())
    }

    fn clamped_mass(&self, key: &AtomKey) -> f64 {
        self.atoms.get(key).map(|a| a.mass.re.max(0.0)).unwrap_or(0.0)
    }
}

fn union_keys(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Vec<AtomKey> {
    let mut keys: BTreeSet<AtomKey> = BTreeSet::new();
    keys.extend(mu.atoms.keys().copied());
    keys.extend(nu.atoms.keys().copied());
    keys.into_iter().collect()
}

/// Total variation of `mu - nu`.
pub fn total_variation_distance(mu: &AtomicMeasure, nu: &AtomicMeasure) -> f64 {
    union_keys(mu, nu)
        .iter()
        .map(|k| {
            let a = mu.atoms.get(k).map(|x| x.mass).unwrap_or_default();
            let b = nu.atoms.get(k).map(|x| x.mass).unwrap_or_default();
            (a - b).norm()
        })
        .sum()
}

/// Closed form of the partition supremum for positive atomic measures:
/// the sum over the union support of squared differences of root masses.
pub fn hellinger_sq(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    mu.ensure_positive(NONZERO_TOL)?;
    nu.ensure_positive(NONZERO_TOL)?;
    Ok(union_keys(mu, nu)
        .iter()
        .map(|k| {
            let d = mu.clamped_mass(k).sqrt() - nu.clamped_mass(k).sqrt();
            d * d
        })
        .sum())
}

/// Exhaustive oracle for the partition supremum: enumerates every set
/// partition of the union support (restricted growth strings) and maximizes
/// the squared root-mass difference over cells. Exponential; refuses
/// supports above [`PARTITION_ORACLE_LIMIT`].
pub fn partition_sup_oracle(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    mu.ensure_positive(NONZERO_TOL)?;
    nu.ensure_positive(NONZERO_TOL)?;
    let keys = union_keys(mu, nu);
    let n = keys.len();
    if n > PARTITION_ORACLE_LIMIT {
        return Err(Error::SupportTooLarge {
            size: n,
            limit: PARTITION_ORACLE_LIMIT,
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mu_masses: Vec<f64> = keys.iter().map(|k| mu.clamped_mass(k)).collect();
    let nu_masses: Vec<f64> = keys.iter().map(|k| nu.clamped_mass(k)).collect();

    let mut best = 0.0f64;
    let mut assign = vec![0usize; n];
    loop {
        let cells = assign.iter().copied().max().unwrap() + 1;
        let mut mu_cell = vec![0.0f64; cells];
        let mut nu_cell = vec![0.0f64; cells];
        for i in 0..n {
            mu_cell[assign[i]] += mu_masses[i];
            nu_cell[assign[i]] += nu_masses[i];
        }
        let value: f64 = (0..cells)
            .map(|c| {
                let d = mu_cell[c].sqrt() - nu_cell[c].sqrt();
                d * d
            })
            .sum();
        best = best.max(value);

        // Next restricted growth string: digit i may rise to
        // 1 + max(previous digits).
        let mut i = n;
        loop {
            if i == 1 {
                return Ok(best);
            }
            i -= 1;
            let prefix_max = assign[..i].iter().copied().max().unwrap();
            if assign[i] <= prefix_max {
                assign[i] += 1;
                for d in assign.iter_mut().skip(i + 1) {
                    *d = 0;
                }
                break;
            }
        }
    }
}

/// Identifier of a half-open dyadic square `[j, j+1) x [l, l+1)` scaled by
/// `2^-level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DyadicSquare {
    pub level: u32,
    pub j: i64,
    pub l: i64,
}

impl DyadicSquare {
    pub fn containing(z: Complex64, level: u32) -> DyadicSquare {
        let side = 0.5f64.powi(level as i32);
        DyadicSquare {
            level,
            j: (z.re / side).floor() as i64,
            l: (z.im / side).floor() as i64,
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        DyadicSquare::containing(z, self.level) == *self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SquareResidual {
    pub square: DyadicSquare,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStarReport {
    pub converged: bool,
    pub residuals: Vec<SquareResidual>,
}

/// Tests weak-star convergence of the tail of `seq` against `limit` by
/// comparing masses on every dyadic square, at resolutions `1..=level`, that
/// meets the union of the supports. The reported residuals belong to the
/// last element of the sequence.
pub fn weakstar_converged(
    seq: &[AtomicMeasure],
    limit: &AtomicMeasure,
    level: u32,
    tol: f64,
) -> Result<WeakStarReport> {
    if level == 0 || level > DYADIC_LEVEL_CAP {
        return Err(Error::Budget {
            what: "dyadic resolution",
            needed: level as u64,
            budget: DYADIC_LEVEL_CAP as u64,
        });
    }
    let last = seq.last().ok_or_else(|| {
        Error::Invalid("weak-star test needs a nonempty sequence".into())
    })?;

    let mut squares: BTreeSet<DyadicSquare> = BTreeSet::new();
    for n in 1..=level {
        for m in seq.iter().chain(std::iter::once(limit)) {
            for a in m.atoms.values() {
                squares.insert(DyadicSquare::containing(a.point, n));
            }
        }
    }

    let mut residuals = Vec::with_capacity(squares.len());
    let mut converged = true;
    for sq in squares {
        let mass_of = |m: &AtomicMeasure| {
            m.atoms
                .values()
                .filter(|a| sq.contains(a.point))
                .fold(Complex64::new(0.0, 0.0), |acc, a| acc + a.mass)
        };
        let residual = (mass_of(last) - mass_of(limit)).norm();
        if residual > tol {
            converged = false;
        }
        residuals.push(SquareResidual {
            square: sq,
            residual,
        });
    }
    Ok(WeakStarReport {
        converged,
        residuals,
    })
}

/// True when every atom of `mu` with mass above `tol` also carries `nu`-mass
/// above `tol`. Positive `nu` expected.
pub fn abs_continuous(mu: &AtomicMeasure, nu: &AtomicMeasure, tol: f64) -> Result<bool> {
    nu.ensure_positive(tol)?;
    for (key, a) in mu.atoms.iter() {
        if a.mass.norm() > tol && nu.clamped_mass(key) <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Serialize, Deserialize)]
struct MeasureAtomRepr {
    re: f64,
    im: f64,
    mass_re: f64,
    mass_im: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    atoms: Vec<MeasureAtomRepr>,
}

impl Serialize for AtomicMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr {
            atoms: self
                .atoms
                .values()
                .map(|a| MeasureAtomRepr {
                    re: a.point.re,
                    im: a.point.im,
                    mass_re: a.mass.re,
                    mass_im: a.mass.im,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(deserializer)?;
        let mut entries = Vec::with_capacity(repr.atoms.len());
        for a in repr.atoms {
            let p = Complex64::new(a.re, a.im);
            let mass = Complex64::new(a.mass_re, a.mass_im);
            if !is_finite_c(p) || !is_finite_c(mass) {
                return Err(D::Error::custom("non-finite measure entry"));
            }
            entries.push((p, mass));
        }
        Ok(AtomicMeasure::from_atoms(entries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn delta(p: Complex64) -> AtomicMeasure {
        AtomicMeasure::from_atoms(vec![(p, c(1.0, 0.0))])
    }

    #[test]
    fn orthonormal_distance_squared_is_two() {
        let d = hellinger_sq(&delta(c(0.0, 0.0)), &delta(c(1.0, 0.0))).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_pair_frozen_value() {
        // mu = delta_0, nu = (delta_0 + delta_1)/2: distance^2 = 2 - sqrt(2).
        let mu = delta(c(0.0, 0.0));
        let nu = AtomicMeasure::from_atoms(vec![
            (c(0.0, 0.0), c(0.5, 0.0)),
            (c(1.0, 0.0), c(0.5, 0.0)),
        ]);
        let d = hellinger_sq(&mu, &nu).unwrap();
        assert!((d - (2.0 - 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn oracle_agrees_with_closed_form() {
        let mut rng = testkit::rng(23);
        let atoms: Vec<Complex64> = (0..6).map(|i| c(i as f64 * 0.3 - 0.8, 0.1)).collect();
        for _ in 0..40 {
            let mu = testkit::random_positive_measure(&atoms, &mut rng);
            let nu = testkit::random_positive_measure(&atoms, &mut rng);
            let closed = hellinger_sq(&mu, &nu).unwrap();
            let oracle = partition_sup_oracle(&mu, &nu).unwrap();
            assert!(
                (closed - oracle).abs() <= 1e-12,
                "closed {closed} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn oracle_refuses_large_support() {
        let atoms: Vec<Complex64> = (0..11).map(|i| c(i as f64 * 0.1, 0.0)).collect();
        let mu = AtomicMeasure::from_atoms(atoms.iter().map(|z| (*z, c(0.1, 0.0))).collect());
        assert!(matches!(
            partition_sup_oracle(&mu, &AtomicMeasure::empty()),
            Err(Error::SupportTooLarge { size: 11, .. })
        ));
    }

    #[test]
    fn total_variation_bounds_distance_squared() {
        let mut rng = testkit::rng(31);
        let atoms: Vec<Complex64> = (0..5).map(|i| c(i as f64 * 0.25, -0.2)).collect();
        for _ in 0..60 {
            let mu = testkit::random_positive_measure(&atoms, &mut rng);
            let nu = testkit::random_positive_measure(&atoms, &mut rng);
            let d2 = hellinger_sq(&mu, &nu).unwrap();
            let tv = total_variation_distance(&mu, &nu);
            assert!(d2 <= tv + 1e-12, "d2 {d2} exceeds tv {tv}");
        }
    }

    #[test]
    fn moving_atom_converges_weakly_but_not_in_distance() {
        // Point masses at 1/n converge to a point mass at 0 on every dyadic
        // square once 1/n enters the square containing 0, while the
        // closed-form distance stays at sqrt(2).
        let seq: Vec<AtomicMeasure> = (1..=300).map(|n| delta(c(1.0 / n as f64, 0.0))).collect();
        let lim = delta(c(0.0, 0.0));
        let report = weakstar_converged(&seq, &lim, 8, 1e-9).unwrap();
        assert!(report.converged);
        let d = hellinger_sq(seq.last().unwrap(), &lim).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weakstar_detects_mass_mismatch() {
        let seq = vec![delta(c(0.25, 0.25))];
        let lim = AtomicMeasure::from_atoms(vec![(c(0.25, 0.25), c(0.5, 0.0))]);
        let report = weakstar_converged(&seq, &lim, 3, 1e-9).unwrap();
        assert!(!report.converged);
        assert!(report.residuals.iter().any(|r| (r.residual - 0.5).abs() < 1e-12));
    }

    #[test]
    fn level_cap_enforced() {
        let seq = vec![delta(c(0.0, 0.0))];
        assert!(weakstar_converged(&seq, &delta(c(0.0, 0.0)), 9, 1e-9).is_err());
    }

    #[test]
    fn absolute_continuity() {
        let mu = delta(c(0.5, 0.0));
        let nu = AtomicMeasure::from_atoms(vec![
            (c(0.5, 0.0), c(0.3, 0.0)),
            (c(0.7, 0.0), c(0.7, 0.0)),
        ]);
        assert!(abs_continuous(&mu, &nu, NONZERO_TOL).unwrap());
        assert!(!abs_continuous(&nu, &mu, NONZERO_TOL).unwrap());
    }

    #[test]
    fn positivity_check_rejects_complex_mass() {
        let m = AtomicMeasure::from_atoms(vec![(c(0.0, 0.0), c(0.5, 0.4))]);
        assert!(m.ensure_positive(1e-12).is_err());
        assert!(hellinger_sq(&m, &AtomicMeasure::empty()).is_err());
    }

    #[test]
    fn measure_json_round_trip() {
        let m = AtomicMeasure::from_atoms(vec![
            (c(0.5, -0.5), c(0.25, 0.0)),
            (c(-1.0, 0.0), c(0.0, 0.125)),
        ]);
        let s = serde_json::to_string(&m).unwrap();
        let back: AtomicMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
