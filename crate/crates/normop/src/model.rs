//! Abstract spectral models: finitely many spectrum atoms, each carrying a
//! finite or infinite multiplicity, with coordinates materialized on demand.
//!
//! A vector is a sparse map from `(block, coordinate)` to complex entries;
//! the operator acts diagonally, scaling every coordinate of a block by the
//! block's atom. Finite blocks are always fully materialized (the count is
//! just bookkeeping); infinite blocks grow through [`SpectralModel::allocate_fresh`],
//! which is the single mutating operation in the crate and must be
//! externally serialized by the caller.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::de::Error as SerdeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::common::{atom_key, is_finite_c, AtomKey};
use crate::measure::AtomicMeasure;
use crate::{Error, Result};

/// Block multiplicity: a positive finite count or infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Multiplicity {
    Finite(u32),
    Infinite,
}

impl Multiplicity {
    /// Additive merge; infinity absorbs.
    pub fn add(self, other: Multiplicity) -> Multiplicity {
        match (self, other) {
            (Multiplicity::Finite(a), Multiplicity::Finite(b)) => Multiplicity::Finite(a + b),
            _ => Multiplicity::Infinite,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Multiplicity::Finite(_))
    }
}

/// One spectrum atom with its multiplicity and materialized-coordinate count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub lambda: Complex64,
    pub mult: Multiplicity,
    pub allocated: u32,
}

/// Spectrum atoms sorted lexicographically by (re, im) of the rounded atom,
/// pairwise distinct under canonical rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    label: String,
    blocks: Vec<Block>,
}

impl SpectralModel {
    /// Builds a model from `(atom, multiplicity)` pairs. Finite blocks come
    /// out fully materialized; infinite blocks start empty.
    pub fn build(atoms: &[(Complex64, Multiplicity)], label: &str) -> Result<SpectralModel> {
        let mut blocks = Vec::with_capacity(atoms.len());
        for (z, m) in atoms {
            if !is_finite_c(*z) {
                return Err(Error::NonFinite(blocks.len()));
            }
            if let Multiplicity::Finite(0) = m {
                return Err(Error::Invalid("finite multiplicity must be >= 1".into()));
            }
            let allocated = match m {
                Multiplicity::Finite(n) => *n,
                Multiplicity::Infinite => 0,
            };
            blocks.push(Block {
                lambda: *z,
                mult: *m,
                allocated,
            });
        }
        Self::from_blocks(blocks, label)
    }

    fn from_blocks(mut blocks: Vec<Block>, label: &str) -> Result<SpectralModel> {
        blocks.sort_by_key(|b| atom_key(b.lambda));
        for w in blocks.windows(2) {
            if atom_key(w[0].lambda) == atom_key(w[1].lambda) {
                return Err(Error::DuplicateAtom {
                    re: w[1].lambda.re,
                    im: w[1].lambda.im,
                });
            }
        }
        Ok(SpectralModel {
            label: label.to_string(),
            blocks,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Spectrum atoms in storage order.
    pub fn atoms(&self) -> Vec<Complex64> {
        self.blocks.iter().map(|b| b.lambda).collect()
    }

    pub fn block_index(&self, z: Complex64) -> Option<u32> {
        let key = atom_key(z);
        self.blocks
            .binary_search_by_key(&key, |b| atom_key(b.lambda))
            .ok()
            .map(|i| i as u32)
    }

    fn check_owner(&self, v: &ModelVector) -> Result<()> {
        if v.owner != self.label {
            return Err(Error::ModelMismatch {
                expected: self.label.clone(),
                got: v.owner.clone(),
            });
        }
        Ok(())
    }

    /// Validates that every coordinate of `v` exists in this model.
    pub fn check_vector(&self, v: &ModelVector) -> Result<()> {
        self.check_owner(v)?;
        for (&(b, i), _) in v.coords() {
            let block = self
                .blocks
                .get(b as usize)
                .ok_or(Error::CoordinateRange { block: b, index: i })?;
            if i >= block.allocated {
                return Err(Error::CoordinateRange { block: b, index: i });
            }
        }
        Ok(())
    }

    /// Applies the operator: coordinate `(b, i)` is scaled by the block atom.
    pub fn apply_t(&self, v: &ModelVector) -> Result<ModelVector> {
        self.check_vector(v)?;
        let mut out = ModelVector::zero(&self.label);
        for (&(b, i), &val) in v.coords() {
            out.set_coord(b, i, val * self.blocks[b as usize].lambda);
        }
        Ok(out)
    }

    /// Applies the adjoint: scaling by the conjugate atom.
    pub fn apply_tstar(&self, v: &ModelVector) -> Result<ModelVector> {
        self.check_vector(v)?;
        let mut out = ModelVector::zero(&self.label);
        for (&(b, i), &val) in v.coords() {
            out.set_coord(b, i, val * self.blocks[b as usize].lambda.conj());
        }
        Ok(out)
    }

    /// `|T* x - y|`: zero exactly when `y` witnesses the adjoint of `x`.
    pub fn adjoint_residual(&self, x: &ModelVector, y: &ModelVector) -> Result<f64> {
        self.check_vector(x)?;
        self.check_vector(y)?;
        Ok(self.apply_tstar(x)?.sub(y)?.norm())
    }

    /// Projection onto the span of blocks whose atom lies in `region`.
    pub fn spectral_projection(&self, v: &ModelVector, region: &Region) -> Result<ModelVector> {
        self.check_vector(v)?;
        let mut out = ModelVector::zero(&self.label);
        for (&(b, i), &val) in v.coords() {
            if region.contains(self.blocks[b as usize].lambda) {
                out.set_coord(b, i, val);
            }
        }
        Ok(out)
    }

    /// Scalar spectral measure `A -> <E(A) v, w>`, atomic on the spectrum.
    pub fn scalar_measure(&self, v: &ModelVector, w: &ModelVector) -> Result<AtomicMeasure> {
        self.check_vector(v)?;
        self.check_vector(w)?;
        let mut per_block: BTreeMap<u32, Complex64> = BTreeMap::new();
        for (&(b, i), &val) in v.coords() {
            if let Some(&other) = w.coords().get(&(b, i)) {
                *per_block.entry(b).or_insert(Complex64::new(0.0, 0.0)) += val * other.conj();
            }
        }
        Ok(AtomicMeasure::from_atoms(
            per_block
                .into_iter()
                .map(|(b, mass)| (self.blocks[b as usize].lambda, mass))
                .collect(),
        ))
    }

    /// Riemann sum of `phi` against the projection-valued measure:
    /// `sum_i phi(samples[i]) E(cells[i])`.
    ///
    /// The cells must cover every spectrum atom exactly once. The reported
    /// `sup_error` is the exact operator-norm distance to `phi(T)`, namely
    /// the worst per-atom deviation `|phi(atom) - phi(sample of its cell)|`.
    pub fn integrate_pvm(
        &self,
        phi: impl Fn(Complex64) -> Complex64,
        cells: &[Region],
        samples: &[Complex64],
    ) -> Result<PvmIntegral> {
        if cells.len() != samples.len() {
            return Err(Error::Dimension(format!(
                "{} cells against {} sample points",
                cells.len(),
                samples.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(self.blocks.len());
        let mut sup_error: f64 = 0.0;
        for block in &self.blocks {
            let hits: Vec<usize> = (0..cells.len())
                .filter(|&c| cells[c].contains(block.lambda))
                .collect();
            match hits.len() {
                0 => {
                    return Err(Error::Partition(format!(
                        "atom ({}, {}) is not covered by any cell",
                        block.lambda.re, block.lambda.im
                    )))
                }
                1 => {}
                _ => {
                    return Err(Error::Partition(format!(
                        "atom ({}, {}) is covered by cells {:?}",
                        block.lambda.re, block.lambda.im, hits
                    )))
                }
            }
            let coeff = phi(samples[hits[0]]);
            if !is_finite_c(coeff) {
                return Err(Error::NonFinite(hits[0]));
            }
            let exact = phi(block.lambda);
            sup_error = sup_error.max((exact - coeff).norm());
            coeffs.push(coeff);
        }
        Ok(PvmIntegral {
            op: BlockOperator {
                owner: self.label.clone(),
                coeffs,
            },
            sup_error,
        })
    }

    /// Disjoint union of operators; multiplicities of shared atoms add,
    /// infinity absorbing. The surviving atom representative of a shared
    /// block is taken from `self`.
    pub fn direct_sum(&self, other: &SpectralModel, label: &str) -> Result<SpectralModel> {
        let mut merged: BTreeMap<AtomKey, Block> = BTreeMap::new();
        for b in self.blocks.iter().chain(other.blocks.iter()) {
            match merged.entry(atom_key(b.lambda)) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(*b);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let cur = e.get_mut();
                    cur.mult = cur.mult.add(b.mult);
                    cur.allocated += b.allocated;
                }
            }
        }
        Self::from_blocks(merged.into_values().collect(), label)
    }

    /// Materializes one more coordinate of an infinite block and returns its
    /// index. Finite blocks are born full, so they always refuse.
    pub fn allocate_fresh(&mut self, block: u32) -> Result<u32> {
        let b = self
            .blocks
            .get_mut(block as usize)
            .ok_or(Error::CoordinateRange { block, index: 0 })?;
        match b.mult {
            Multiplicity::Finite(m) => Err(Error::Capacity { block, mult: m }),
            Multiplicity::Infinite => {
                let idx = b.allocated;
                b.allocated += 1;
                Ok(idx)
            }
        }
    }

    /// Atoms at distance strictly less than `radius` from `center`, as a
    /// region of atoms.
    pub fn atoms_within(&self, center: Complex64, radius: f64) -> Region {
        Region {
            atoms: self
                .blocks
                .iter()
                .map(|b| b.lambda)
                .filter(|z| (z - center).norm() < radius)
                .collect(),
            boxes: vec![],
        }
    }

    /// Stage-`k` compactness witness: the first `min(k, len)` isolated atoms
    /// with dimensions `min(k, mult)`, plus a one-dimensional block at every
    /// point of the supplied net of the non-isolated part. Collisions merge
    /// additively.
    pub fn pseudocompact_witness(
        isolated: &[(Complex64, Multiplicity)],
        net: &[Complex64],
        k: u32,
        label: &str,
    ) -> Result<SpectralModel> {
        if k == 0 {
            return Err(Error::Invalid("witness stage k must be >= 1".into()));
        }
        let mut merged: BTreeMap<AtomKey, (Complex64, u32)> = BTreeMap::new();
        let take = (k as usize).min(isolated.len());
        for (z, m) in &isolated[..take] {
            let dim = match m {
                Multiplicity::Finite(n) => (*n).min(k),
                Multiplicity::Infinite => k,
            };
            let e = merged.entry(atom_key(*z)).or_insert((*z, 0));
            e.1 += dim;
        }
        for z in net {
            let e = merged.entry(atom_key(*z)).or_insert((*z, 0));
            e.1 += 1;
        }
        let atoms: Vec<(Complex64, Multiplicity)> = merged
            .into_values()
            .map(|(z, d)| (z, Multiplicity::Finite(d)))
            .collect();
        SpectralModel::build(&atoms, label)
    }
}

/// Block-diagonal operator acting as multiplication by `coeffs[b]` on block `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperator {
    pub owner: String,
    pub coeffs: Vec<Complex64>,
}

impl BlockOperator {
    pub fn apply(&self, v: &ModelVector) -> Result<ModelVector> {
        if v.owner != self.owner {
            return Err(Error::ModelMismatch {
                expected: self.owner.clone(),
                got: v.owner.clone(),
            });
        }
        let mut out = ModelVector::zero(&self.owner);
        for (&(b, i), &val) in v.coords() {
            let c = self
                .coeffs
                .get(b as usize)
                .ok_or(Error::CoordinateRange { block: b, index: i })?;
            out.set_coord(b, i, val * c);
        }
        Ok(out)
    }
}

/// Riemann-sum approximation of `phi(T)` with its exact operator error.
#[derive(Clone, Debug)]
pub struct PvmIntegral {
    pub op: BlockOperator,
    pub sup_error: f64,
}

/// Sparse vector over the materialized coordinates of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelVector {
    owner: String,
    coords: BTreeMap<(u32, u32), Complex64>,
}

impl ModelVector {
    pub fn zero(owner: &str) -> ModelVector {
        ModelVector {
            owner: owner.to_string(),
            coords: BTreeMap::new(),
        }
    }

    /// Unit vector in coordinate `(block, index)`, validated against `model`.
    pub fn unit(model: &SpectralModel, block: u32, index: u32) -> Result<ModelVector> {
        let mut v = ModelVector::zero(model.label());
        v.set_coord(block, index, Complex64::new(1.0, 0.0));
        model.check_vector(&v)?;
        Ok(v)
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn coords(&self) -> &BTreeMap<(u32, u32), Complex64> {
        &self.coords
    }

    /// Sets one coordinate, dropping exact zeros to keep the map canonical.
    pub fn set_coord(&mut self, block: u32, index: u32, value: Complex64) {
        if value == Complex64::new(0.0, 0.0) {
            self.coords.remove(&(block, index));
        } else {
            self.coords.insert((block, index), value);
        }
    }

    pub fn coord(&self, block: u32, index: u32) -> Complex64 {
        self.coords
            .get(&(block, index))
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    fn check_same_owner(&self, other: &ModelVector) -> Result<()> {
        if self.owner != other.owner {
            return Err(Error::ModelMismatch {
                expected: self.owner.clone(),
                got: other.owner.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &ModelVector) -> Result<ModelVector> {
        self.check_same_owner(other)?;
        let mut out = self.clone();
        for (&k, &v) in &other.coords {
            let cur = out.coord(k.0, k.1);
            out.set_coord(k.0, k.1, cur + v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ModelVector) -> Result<ModelVector> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> ModelVector {
        let mut out = ModelVector::zero(&self.owner);
        for (&(b, i), &v) in &self.coords {
            out.set_coord(b, i, v * s);
        }
        out
    }

    /// Inner product, linear in `self`, conjugate-linear in `other`.
    pub fn inner(&self, other: &ModelVector) -> Result<Complex64> {
        self.check_same_owner(other)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (&k, &v) in &self.coords {
            if let Some(&w) = other.coords.get(&k) {
                acc += v * w.conj();
            }
        }
        Ok(acc)
    }

    pub fn norm_sqr(&self) -> f64 {
        // `Sum for f64` folds from -0.0; clamp so the empty vector reports
        // +0.0 and downstream square roots keep the sign.
        self.coords
            .values()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dist(&self, other: &ModelVector) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    /// Coordinates grouped by block with their partial norms squared.
    pub fn block_masses(&self) -> BTreeMap<u32, f64> {
        let mut out: BTreeMap<u32, f64> = BTreeMap::new();
        for (&(b, _), &v) in &self.coords {
            *out.entry(b).or_insert(0.0) += v.norm_sqr();
        }
        out
    }
}

/// Subset of the plane: finitely many atoms (membership by canonical
/// rounding) plus half-open boxes `[x0, x1) x [y0, y1)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Region {
    pub atoms: Vec<Complex64>,
    pub boxes: Vec<BoxRegion>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BoxRegion {
    pub fn contains(&self, z: Complex64) -> bool {
        self.x0 <= z.re && z.re < self.x1 && self.y0 <= z.im && z.im < self.y1
    }
}

impl Region {
    pub fn from_atoms(atoms: Vec<Complex64>) -> Region {
        Region {
            atoms,
            boxes: vec![],
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let key = atom_key(z);
        self.atoms.iter().any(|a| atom_key(*a) == key) || self.boxes.iter().any(|b| b.contains(z))
    }
}

#[derive(Serialize, Deserialize)]
struct BlockRepr {
    re: f64,
    im: f64,
    mult: MultRepr,
    allocated: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MultRepr {
    Finite(u32),
    Word(String),
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    label: String,
    blocks: Vec<BlockRepr>,
}

impl Serialize for SpectralModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelRepr {
            label: self.label.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockRepr {
                    re: b.lambda.re,
                    im: b.lambda.im,
                    mult: match b.mult {
                        Multiplicity::Finite(n) => MultRepr::Finite(n),
                        Multiplicity::Infinite => MultRepr::Word("inf".to_string()),
                    },
                    allocated: b.allocated,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpectralModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ModelRepr::deserialize(deserializer)?;
        let mut blocks = Vec::with_capacity(repr.blocks.len());
        for b in repr.blocks {
            let mult = match b.mult {
                MultRepr::Finite(n) => {
                    if n == 0 {
                        return Err(D::Error::custom("finite multiplicity must be >= 1"));
                    }
                    Multiplicity::Finite(n)
                }
                MultRepr::Word(w) if w == "inf" => Multiplicity::Infinite,
                MultRepr::Word(w) => {
                    return Err(D::Error::custom(format!(
                        "multiplicity must be a positive integer or \"inf\", got \"{w}\""
                    )))
                }
            };
            // Finite blocks are always fully materialized in memory; stored
            // counts are normalized up. Infinite blocks keep their count.
            let allocated = match mult {
                Multiplicity::Finite(n) => {
                    if b.allocated > n {
                        return Err(D::Error::custom(format!(
                            "allocated {} exceeds multiplicity {}",
                            b.allocated, n
                        )));
                    }
                    n
                }
                Multiplicity::Infinite => b.allocated,
            };
            let lambda = Complex64::new(b.re, b.im);
            if !is_finite_c(lambda) {
                return Err(D::Error::custom("non-finite atom"));
            }
            blocks.push(Block {
                lambda,
                mult,
                allocated,
            });
        }
        SpectralModel::from_blocks(blocks, &repr.label).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct CoordRepr {
    block: u32,
    index: u32,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct VectorRepr {
    model: String,
    coords: Vec<CoordRepr>,
}

impl Serialize for ModelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        VectorRepr {
            model: self.owner.clone(),
            coords: self
                .coords
                .iter()
                .map(|(&(b, i), &v)| CoordRepr {
                    block: b,
                    index: i,
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = VectorRepr::deserialize(deserializer)?;
        let mut v = ModelVector::zero(&repr.model);
        for c in repr.coords {
            let z = Complex64::new(c.re, c.im);
            if !is_finite_c(z) {
                return Err(D::Error::custom("non-finite coordinate"));
            }
            if v.coords.contains_key(&(c.block, c.index)) {
                return Err(D::Error::custom(format!(
                    "duplicate coordinate ({}, {})",
                    c.block, c.index
                )));
            }
            v.set_coord(c.block, c.index, z);
        }
        Ok(v)
    }
}

#[derive(Serialize, Deserialize)]
struct PointRepr {
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize, Default)]
struct RegionRepr {
    #[serde(default)]
    atoms: Vec<PointRepr>,
    #[serde(default)]
    boxes: Vec<BoxRegion>,
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RegionRepr {
            atoms: self
                .atoms
                .iter()
                .map(|z| PointRepr { re: z.re, im: z.im })
                .collect(),
            boxes: self.boxes.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = RegionRepr::deserialize(deserializer)?;
        Ok(Region {
            atoms: repr
                .atoms
                .into_iter()
                .map(|p| Complex64::new(p.re, p.im))
                .collect(),
            boxes: repr.boxes,
        })
    }
}
