//! Theories of spectrum sets, comparison of models, and limits.
//!
//! A theory is described by its spectrum data: finitely many atoms, each
//! marked isolated (with a multiplicity) or accumulating, plus half-open
//! boxes for the perfect part. Two models are spectrally equivalent when
//! their atoms match within tolerance with equal multiplicities; alignment
//! produces the approximate-unitary-equivalence certificate, a bottleneck
//! assignment of coordinates.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::de::Error as SerdeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::common::{atom_key, is_finite_c, lex_cmp};
use crate::model::{Block, BoxRegion, Multiplicity, SpectralModel};
use crate::typespace::TypeDescriptor;
use crate::{Error, Result};

/// Multiplicity growth beyond this cap is read as infinite in limits.
pub const MULT_GROWTH_CAP: u32 = 64;

/// Largest support for the exhaustive perturbation search.
pub const PERT_BRUTE_LIMIT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryAtom {
    pub lambda: Complex64,
    /// Present exactly for isolated atoms.
    pub mult: Option<Multiplicity>,
    pub isolated: bool,
}

/// Spectrum-set description: atoms plus perfect-part boxes.
///
/// Box membership is half-open; nets of the perfect part cover the closure,
/// so a degenerate box (zero width or height) denotes a segment or point of
/// the accumulation set.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TheoryDescriptor {
    pub atoms: Vec<TheoryAtom>,
    pub perfect: Vec<BoxRegion>,
}

impl TheoryDescriptor {
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            if !is_finite_c(a.lambda) {
                return Err(Error::NonFinite(i));
            }
            if a.isolated != a.mult.is_some() {
                return Err(Error::Invalid(format!(
                    "atom ({}, {}): multiplicities are recorded exactly for isolated atoms",
                    a.lambda.re, a.lambda.im
                )));
            }
            if let Some(Multiplicity::Finite(0)) = a.mult {
                return Err(Error::Invalid("finite multiplicity must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Membership in the spectrum set: an atom (by canonical rounding) or a
    /// point of a perfect box.
    pub fn contains(&self, z: Complex64) -> bool {
        let key = atom_key(z);
        self.atoms.iter().any(|a| atom_key(a.lambda) == key)
            || self.perfect.iter().any(|b| b.contains(z))
    }

    pub fn is_isolated_atom(&self, z: Complex64) -> bool {
        let key = atom_key(z);
        self.atoms
            .iter()
            .any(|a| a.isolated && atom_key(a.lambda) == key)
    }

    pub fn isolated_atoms(&self) -> Vec<(Complex64, Multiplicity)> {
        self.atoms
            .iter()
            .filter(|a| a.isolated)
            .map(|a| (a.lambda, a.mult.unwrap()))
            .collect()
    }

    /// All descriptor points: atoms plus a fine sampling of the boxes; used
    /// for set-distance checks against recovered descriptors.
    pub fn sample_points(&self, k: u32) -> Vec<Complex64> {
        let mut pts: Vec<Complex64> = self.atoms.iter().map(|a| a.lambda).collect();
        pts.extend(self.perfect_net(k));
        pts
    }

    /// `1/k`-net of the closure of the perfect part, together with every
    /// accumulating atom (whose net is the point itself).
    pub fn perfect_net(&self, k: u32) -> Vec<Complex64> {
        let mut pts: Vec<Complex64> = self
            .atoms
            .iter()
            .filter(|a| !a.isolated)
            .map(|a| a.lambda)
            .collect();
        for b in &self.perfect {
            pts.extend(box_net(b, k));
        }
        pts
    }

    /// Stage-`k` compactness witness of this theory.
    pub fn witness(&self, k: u32, label: &str) -> Result<SpectralModel> {
        SpectralModel::pseudocompact_witness(&self.isolated_atoms(), &self.perfect_net(k), k, label)
    }

    /// Witness sequence for stages `1..=k_max`.
    pub fn witness_sequence(&self, k_max: u32, label_prefix: &str) -> Result<Vec<SpectralModel>> {
        self.validate()?;
        (1..=k_max)
            .map(|k| self.witness(k, &format!("{label_prefix}{k}")))
            .collect()
    }
}

/// Point count of [`box_net`] without materializing it.
fn box_net_size(b: &BoxRegion, k: u32) -> usize {
    let k = k.max(1);
    let count = |extent: f64, other_degenerate: bool| -> usize {
        if extent <= 0.0 {
            return 1;
        }
        let t = if other_degenerate { 1.98 } else { 1.4 } / k as f64;
        (extent / t).ceil() as usize + 1
    };
    let w = (b.x1 - b.x0).max(0.0);
    let h = (b.y1 - b.y0).max(0.0);
    count(w, h <= 0.0) * count(h, w <= 0.0)
}

/// Grid over the closure of a box whose covering radius is below `1/k`.
/// Grid spacing stays above `1.4/k` so nets never collapse under the
/// cluster-merge radius used by limits.
fn box_net(b: &BoxRegion, k: u32) -> Vec<Complex64> {
    let k = k.max(1);
    let w = (b.x1 - b.x0).max(0.0);
    let h = (b.y1 - b.y0).max(0.0);
    // Axis spacing targets: 1.4/k in a genuine rectangle (diagonal below
    // 1/k), 1.98/k along a degenerate axis (half-spacing below 1/k).
    let target = |extent: f64, other_degenerate: bool| -> (usize, f64) {
        if extent <= 0.0 {
            return (1, 0.0);
        }
        let t = if other_degenerate { 1.98 } else { 1.4 } / k as f64;
        let n = (extent / t).ceil() as usize + 1;
        (n, extent / (n - 1) as f64)
    };
    let (nx, sx) = target(w, h <= 0.0);
    let (ny, sy) = target(h, w <= 0.0);
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(Complex64::new(
                b.x0 + i as f64 * sx,
                b.y0 + j as f64 * sy,
            ));
        }
    }
    out
}

/// Two-sided Hausdorff distance between finite point sets. Infinite when
/// exactly one side is empty.
pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_sided = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Maximum bipartite matching (Hopcroft-Karp). `adj[u]` lists the right
/// vertices of `u`; returns `match_left` with `usize::MAX` for unmatched.
fn hopcroft_karp(n_left: usize, n_right: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut match_left = vec![NONE; n_left];
    let mut match_right = vec![NONE; n_right];
    loop {
        // BFS layering from free left vertices.
        let mut dist = vec![NONE; n_left];
        let mut queue: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
        for u in 0..n_left {
            if match_left[u] == NONE {
                dist[u] = 0;
                queue.push_back(u);
            }
        }
        let mut found_free = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_right[v] {
                    NONE => found_free = true,
                    w => {
                        if dist[w] == NONE {
                            dist[w] = dist[u] + 1;
                            queue.push_back(w);
                        }
                    }
                }
            }
        }
        if !found_free {
            return match_left;
        }
        fn try_augment(
            u: usize,
            adj: &[Vec<usize>],
            dist: &mut Vec<usize>,
            match_left: &mut Vec<usize>,
            match_right: &mut Vec<usize>,
        ) -> bool {
            const NONE: usize = usize::MAX;
            for &v in &adj[u] {
                let w = match_right[v];
                if w == NONE
                    || (dist[w] == dist[u].wrapping_add(1)
                        && try_augment(w, adj, dist, match_left, match_right))
                {
                    match_left[u] = v;
                    match_right[v] = u;
                    return true;
                }
            }
            dist[u] = NONE;
            false
        }
        let mut progressed = false;
        for u in 0..n_left {
            if match_left[u] == NONE
                && try_augment(u, adj, &mut dist, &mut match_left, &mut match_right)
            {
                progressed = true;
            }
        }
        if !progressed {
            return match_left;
        }
    }
}

/// Smallest threshold `t` in the candidate list such that a matching of
/// size `want` exists using edges of weight at most `t`. Returns the
/// threshold and the matching.
fn bottleneck_matching(
    left: &[Complex64],
    right: &[Complex64],
    want: usize,
    extra_edge_filter: Option<&dyn Fn(usize, usize) -> bool>,
) -> Option<(f64, Vec<(usize, usize)>)> {
    if want == 0 {
        return Some((0.0, vec![]));
    }
    let mut candidates: Vec<f64> = Vec::new();
    for (i, p) in left.iter().enumerate() {
        for (j, q) in right.iter().enumerate() {
            if extra_edge_filter.map(|f| f(i, j)).unwrap_or(true) {
                candidates.push((p - q).norm());
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    if candidates.is_empty() {
        return None;
    }
    let feasible = |t: f64| -> Option<Vec<(usize, usize)>> {
        let adj: Vec<Vec<usize>> = (0..left.len())
            .map(|i| {
                (0..right.len())
                    .filter(|&j| {
                        extra_edge_filter.map(|f| f(i, j)).unwrap_or(true)
                            && (right[j] - left[i]).norm() <= t
                    })
                    .collect()
            })
            .collect();
        let ml = hopcroft_karp(left.len(), right.len(), &adj);
        let pairs: Vec<(usize, usize)> = ml
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != usize::MAX)
            .map(|(u, v)| (u, *v))
            .collect();
        if pairs.len() >= want {
            Some(pairs)
        } else {
            None
        }
    };
    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    feasible(candidates[hi])?;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let pairs = feasible(candidates[lo]).unwrap();
    Some((candidates[lo], pairs))
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivReport {
    pub equivalent: bool,
    pub reason: Option<String>,
    /// Matched block indices (left model, right model) when a matching
    /// within tolerance exists.
    pub pairs: Vec<(usize, usize)>,
    /// Bottleneck atom shift of the best matching regardless of tolerance.
    pub bottleneck: f64,
    pub tol: f64,
}

/// Spectral equivalence: equal spectra within `tol` under a bijection of
/// blocks with equal multiplicities.
pub fn spectrally_equivalent(a: &SpectralModel, b: &SpectralModel, tol: f64) -> EquivReport {
    let la: Vec<Complex64> = a.atoms();
    let lb: Vec<Complex64> = b.atoms();
    if la.len() != lb.len() {
        return EquivReport {
            equivalent: false,
            reason: Some(format!(
                "block counts differ: {} vs {}",
                la.len(),
                lb.len()
            )),
            pairs: vec![],
            bottleneck: f64::INFINITY,
            tol,
        };
    }
    if la.is_empty() {
        return EquivReport {
            equivalent: true,
            reason: None,
            pairs: vec![],
            bottleneck: 0.0,
            tol,
        };
    }
    let (bottleneck, _) = bottleneck_matching(&la, &lb, la.len(), None).unwrap();
    if bottleneck > tol {
        return EquivReport {
            equivalent: false,
            reason: Some("spectra differ beyond tolerance".into()),
            pairs: vec![],
            bottleneck,
            tol,
        };
    }
    // Restrict to multiplicity-compatible pairs within tolerance.
    let mult_ok = |i: usize, j: usize| a.blocks()[i].mult == b.blocks()[j].mult;
    let adj: Vec<Vec<usize>> = la
        .iter()
        .enumerate()
        .map(|(i, p)| {
            lb.iter()
                .enumerate()
                .filter(|(j, q)| (*q - p).norm() <= tol && mult_ok(i, *j))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let ml = hopcroft_karp(la.len(), lb.len(), &adj);
    let pairs: Vec<(usize, usize)> = ml
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != usize::MAX)
        .map(|(u, v)| (u, *v))
        .collect();
    if pairs.len() == la.len() {
        EquivReport {
            equivalent: true,
            reason: None,
            pairs,
            bottleneck,
            tol,
        }
    } else {
        EquivReport {
            equivalent: false,
            reason: Some("multiplicity mismatch within the atom matching".into()),
            pairs: vec![],
            bottleneck,
            tol,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomResidual {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultEntry {
    pub re: f64,
    pub im: f64,
    pub expected: String,
    pub found: String,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    /// Distance from each theory atom to the model spectrum.
    pub atom_residuals: Vec<AtomResidual>,
    /// Distance from each perfect-part net point to the model spectrum.
    pub net_residuals: Vec<AtomResidual>,
    /// Margin by which a probe point violates the spectrum-exclusion axiom:
    /// `max(0, dist(probe, K) - dist(probe, spectrum))`.
    pub probe_violations: Vec<AtomResidual>,
    pub multiplicities: Vec<MultEntry>,
    pub resolution: f64,
    pub satisfied: bool,
}

fn mult_str(m: Multiplicity) -> String {
    match m {
        Multiplicity::Finite(n) => n.to_string(),
        Multiplicity::Infinite => "inf".into(),
    }
}

/// Residuals of the theory axioms in a model at a net resolution.
pub fn axiom_residuals(
    model: &SpectralModel,
    theory: &TheoryDescriptor,
    resolution: f64,
    extra_probes: &[Complex64],
) -> Result<AxiomReport> {
    if !(resolution > 0.0) {
        return Err(Error::Invalid("resolution must be positive".into()));
    }
    theory.validate()?;
    let k = (1.0 / resolution).ceil() as u32;
    let budget = 200_000usize;
    let net_size: usize = theory
        .perfect
        .iter()
        .map(|b| box_net_size(b, k))
        .sum();
    if net_size > budget {
        return Err(Error::NetBudget {
            eps: resolution,
            achievable: resolution * (net_size as f64 / budget as f64).sqrt(),
        });
    }
    let spectrum = model.atoms();
    let dist_to_spectrum = |z: Complex64| -> f64 {
        spectrum
            .iter()
            .map(|s| (s - z).norm())
            .fold(f64::INFINITY, f64::min)
    };
    let theory_points = theory.sample_points((1.0 / resolution).ceil() as u32);
    let dist_to_theory = |z: Complex64| -> f64 {
        theory_points
            .iter()
            .map(|s| (s - z).norm())
            .fold(f64::INFINITY, f64::min)
    };

    let atom_residuals: Vec<AtomResidual> = theory
        .atoms
        .iter()
        .map(|a| AtomResidual {
            re: a.lambda.re,
            im: a.lambda.im,
            residual: dist_to_spectrum(a.lambda),
        })
        .collect();

    let net_residuals: Vec<AtomResidual> = theory
        .perfect
        .iter()
        .flat_map(|b| box_net(b, k))
        .map(|p| AtomResidual {
            re: p.re,
            im: p.im,
            residual: dist_to_spectrum(p),
        })
        .collect();

    let probe_violations: Vec<AtomResidual> = spectrum
        .iter()
        .copied()
        .chain(extra_probes.iter().copied())
        .map(|p| AtomResidual {
            re: p.re,
            im: p.im,
            residual: (dist_to_theory(p) - dist_to_spectrum(p)).max(0.0),
        })
        .collect();

    let multiplicities: Vec<MultEntry> = theory
        .atoms
        .iter()
        .filter(|a| a.isolated)
        .map(|a| {
            let mut found = None;
            for block in model.blocks() {
                if (block.lambda - a.lambda).norm() < resolution {
                    found = Some(match found {
                        None => block.mult,
                        Some(acc) => Multiplicity::add(acc, block.mult),
                    });
                }
            }
            let expected = a.mult.unwrap();
            let ok = match found {
                Some(f) => f == expected,
                None => false,
            };
            MultEntry {
                re: a.lambda.re,
                im: a.lambda.im,
                expected: mult_str(expected),
                found: found.map(mult_str).unwrap_or_else(|| "none".into()),
                ok,
            }
        })
        .collect();

    let satisfied = atom_residuals.iter().all(|r| r.residual <= resolution)
        && net_residuals.iter().all(|r| r.residual <= resolution)
        && probe_violations.iter().all(|r| r.residual <= resolution)
        && multiplicities.iter().all(|m| m.ok);

    Ok(AxiomReport {
        atom_residuals,
        net_residuals,
        probe_violations,
        multiplicities,
        resolution,
        satisfied,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentCertificate {
    /// Matched infinite blocks (left block index, right block index).
    pub infinite_pairs: Vec<(usize, usize)>,
    /// Matched finite coordinates `((block, copy), (block, copy))`.
    pub finite_pairs: Vec<((usize, u32), (usize, u32))>,
    /// Worst atom shift over all matched pairs.
    pub residual: f64,
}

/// Approximate unitary alignment: bottleneck coordinate assignment.
///
/// Infinite blocks pair with infinite blocks; finite multiplicities are
/// expanded into coordinate copies and matched as multisets. Mismatched
/// structure (different infinite-block counts or finite total dimensions)
/// has no alignment; the error carries the best partial bottleneck.
pub fn aue_align(a: &SpectralModel, b: &SpectralModel) -> Result<AlignmentCertificate> {
    let inf_a: Vec<(usize, Complex64)> = a
        .blocks()
        .iter()
        .enumerate()
        .filter(|(_, bl)| bl.mult == Multiplicity::Infinite)
        .map(|(i, bl)| (i, bl.lambda))
        .collect();
    let inf_b: Vec<(usize, Complex64)> = b
        .blocks()
        .iter()
        .enumerate()
        .filter(|(_, bl)| bl.mult == Multiplicity::Infinite)
        .map(|(i, bl)| (i, bl.lambda))
        .collect();
    let fin_a = expand_finite(a.blocks());
    let fin_b = expand_finite(b.blocks());

    let best_partial = |left: &[(usize, Complex64)], right: &[(usize, Complex64)]| -> f64 {
        let lpts: Vec<Complex64> = left.iter().map(|x| x.1).collect();
        let rpts: Vec<Complex64> = right.iter().map(|x| x.1).collect();
        let want = lpts.len().min(rpts.len());
        bottleneck_matching(&lpts, &rpts, want, None)
            .map(|(t, _)| t)
            .unwrap_or(0.0)
    };

    if inf_a.len() != inf_b.len() {
        return Err(Error::NoAlignment {
            reason: format!(
                "infinite block counts differ: {} vs {}",
                inf_a.len(),
                inf_b.len()
            ),
            bound: best_partial(&inf_a, &inf_b),
        });
    }
    if fin_a.len() != fin_b.len() {
        let fa: Vec<(usize, Complex64)> = fin_a.iter().map(|x| (x.0 .0, x.1)).collect();
        let fb: Vec<(usize, Complex64)> = fin_b.iter().map(|x| (x.0 .0, x.1)).collect();
        return Err(Error::NoAlignment {
            reason: format!(
                "finite dimensions differ: {} vs {}",
                fin_a.len(),
                fin_b.len()
            ),
            bound: best_partial(&fa, &fb),
        });
    }

    let mut residual = 0.0f64;
    let infinite_pairs = if inf_a.is_empty() {
        vec![]
    } else {
        let lpts: Vec<Complex64> = inf_a.iter().map(|x| x.1).collect();
        let rpts: Vec<Complex64> = inf_b.iter().map(|x| x.1).collect();
        let (t, pairs) = bottleneck_matching(&lpts, &rpts, lpts.len(), None).unwrap();
        residual = residual.max(t);
        pairs
            .into_iter()
            .map(|(u, v)| (inf_a[u].0, inf_b[v].0))
            .collect()
    };
    let finite_pairs = if fin_a.is_empty() {
        vec![]
    } else {
        let lpts: Vec<Complex64> = fin_a.iter().map(|x| x.1).collect();
        let rpts: Vec<Complex64> = fin_b.iter().map(|x| x.1).collect();
        let (t, pairs) = bottleneck_matching(&lpts, &rpts, lpts.len(), None).unwrap();
        residual = residual.max(t);
        pairs
            .into_iter()
            .map(|(u, v)| (fin_a[u].0, fin_b[v].0))
            .collect()
    };
    Ok(AlignmentCertificate {
        infinite_pairs,
        finite_pairs,
        residual,
    })
}

fn expand_finite(blocks: &[Block]) -> Vec<((usize, u32), Complex64)> {
    let mut out = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        if let Multiplicity::Finite(m) = b.mult {
            for j in 0..m {
                out.push(((i, j), b.lambda));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitAtomReport {
    pub re: f64,
    pub im: f64,
    pub isolated: bool,
    pub mult: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    pub tail_variation: f64,
    pub atoms: Vec<LimitAtomReport>,
}

/// Limit of a convergent sequence of model spectra.
///
/// The spectra must be Hausdorff-Cauchy: the last third of the sequence
/// stays within `conv_tol` of the final spectrum. Atoms of the final
/// spectrum are merged at the finest schedule radius; a merged atom is
/// isolated when no other merged atom comes within twice that radius.
/// For isolated atoms the multiplicity is the minimum over schedule radii
/// of the stabilized ball multiplicity: the constant value of the last
/// third, or infinite when the counts grow monotonically beyond
/// [`MULT_GROWTH_CAP`].
pub fn limit_theory(
    models: &[SpectralModel],
    schedule: &[f64],
    conv_tol: f64,
) -> Result<(TheoryDescriptor, LimitReport)> {
    if models.len() < 6 {
        return Err(Error::Invalid(
            "limit needs a sequence of at least 6 models".into(),
        ));
    }
    if schedule.is_empty() || schedule.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Invalid("schedule must be positive radii".into()));
    }
    for w in schedule.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Invalid("schedule radii must strictly decrease".into()));
        }
    }
    if !(conv_tol > 0.0) {
        return Err(Error::Invalid("convergence tolerance must be positive".into()));
    }

    let spectra: Vec<Vec<Complex64>> = models.iter().map(|m| m.atoms()).collect();
    let last = spectra.last().unwrap();
    let tail_start = 2 * models.len() / 3;
    let mut tail_variation = 0.0f64;
    for (i, spec) in spectra.iter().enumerate().skip(tail_start) {
        let d = hausdorff(spec, last);
        if d > conv_tol {
            return Err(Error::Divergence {
                what: "hausdorff tail variation",
                index: i,
                value: d,
            });
        }
        tail_variation = tail_variation.max(d);
    }

    // Merge the final spectrum at the finest radius (single linkage).
    let r_min = *schedule.last().unwrap();
    let n = last.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (last[i] - last[j]).norm() <= r_min {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let mut reps: Vec<Complex64> = clusters
        .values()
        .map(|members| {
            let sum = members
                .iter()
                .fold(Complex64::new(0.0, 0.0), |acc, &i| acc + last[i]);
            sum / members.len() as f64
        })
        .collect();
    reps.sort_by(|a, b| lex_cmp(*a, *b));

    let mut atoms = Vec::with_capacity(reps.len());
    let mut report_atoms = Vec::with_capacity(reps.len());
    for (ri, rep) in reps.iter().enumerate() {
        let gap = reps
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ri)
            .map(|(_, q)| (q - rep).norm())
            .fold(f64::INFINITY, f64::min);
        let isolated = gap > 2.0 * r_min;
        let mult = if isolated {
            Some(ball_multiplicity_limit(models, *rep, schedule, ri)?)
        } else {
            None
        };
        atoms.push(TheoryAtom {
            lambda: *rep,
            mult,
            isolated,
        });
        report_atoms.push(LimitAtomReport {
            re: rep.re,
            im: rep.im,
            isolated,
            mult: mult.map(mult_str),
        });
    }
    Ok((
        TheoryDescriptor {
            atoms,
            perfect: vec![],
        },
        LimitReport {
            tail_variation,
            atoms: report_atoms,
        },
    ))
}

/// Minimum over schedule radii of the stabilized multiplicity of the open
/// ball around `rep`.
fn ball_multiplicity_limit(
    models: &[SpectralModel],
    rep: Complex64,
    schedule: &[f64],
    atom_index: usize,
) -> Result<Multiplicity> {
    let mut best: Option<Multiplicity> = None;
    for &r in schedule {
        let series: Vec<Multiplicity> = models
            .iter()
            .map(|m| {
                m.blocks()
                    .iter()
                    .filter(|b| (b.lambda - rep).norm() < r)
                    .fold(Multiplicity::Finite(0), |acc, b| match acc {
                        Multiplicity::Finite(0) => b.mult,
                        other => other.add(b.mult),
                    })
            })
            .collect();
        let value = stabilized_tail(&series, atom_index, r)?;
        best = Some(match best {
            None => value,
            Some(cur) => min_mult(cur, value),
        });
    }
    Ok(best.unwrap())
}

fn min_mult(a: Multiplicity, b: Multiplicity) -> Multiplicity {
    match (a, b) {
        (Multiplicity::Finite(x), Multiplicity::Finite(y)) => Multiplicity::Finite(x.min(y)),
        (Multiplicity::Finite(x), _) | (_, Multiplicity::Finite(x)) => Multiplicity::Finite(x),
        _ => Multiplicity::Infinite,
    }
}

/// Last-third-constant value of a multiplicity series, or infinite for
/// monotone growth beyond the cap.
fn stabilized_tail(series: &[Multiplicity], atom_index: usize, radius: f64) -> Result<Multiplicity> {
    let tail_start = 2 * series.len() / 3;
    let tail = &series[tail_start..];
    if tail.iter().all(|m| *m == tail[0]) {
        return Ok(tail[0]);
    }
    let as_num = |m: Multiplicity| -> u64 {
        match m {
            Multiplicity::Finite(n) => n as u64,
            Multiplicity::Infinite => u64::MAX,
        }
    };
    let nondecreasing = series
        .windows(2)
        .all(|w| as_num(w[0]) <= as_num(w[1]));
    if nondecreasing && as_num(*series.last().unwrap()) >= MULT_GROWTH_CAP as u64 {
        return Ok(Multiplicity::Infinite);
    }
    Err(Error::Divergence {
        what: "ball multiplicity tail",
        index: atom_index,
        value: radius,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PertReport {
    /// Upper bound on the perturbation radius.
    pub bound: f64,
    /// Matched support atoms (index into each support).
    pub matched: Vec<(usize, usize)>,
    pub exhaustive: bool,
}

/// Perturbation distance between two 1-types over the empty set realized in
/// the model: the smallest `r` such that a unitary moving the operator by
/// at most `r` carries a realization of one type within `r` of the other.
///
/// Estimated over partial assignments of support atoms; the cost of an
/// assignment is the larger of the worst atom shift and the root of the
/// total squared root-mass mismatch (unmatched mass counts in full).
/// Exhaustive (hence tight over assignments) for supports up to
/// [`PERT_BRUTE_LIMIT`]; a threshold sweep with greedy mass pairing
/// otherwise, still an upper bound.
pub fn perturbation_distance(
    p: &TypeDescriptor,
    q: &TypeDescriptor,
    model: &SpectralModel,
) -> Result<PertReport> {
    let mu = p.residual_measure()?;
    let nu = q.residual_measure()?;
    mu.ensure_positive(crate::measure::NONZERO_TOL)?;
    nu.ensure_positive(crate::measure::NONZERO_TOL)?;
    for b in p.base.iter().chain(q.base.iter()) {
        if b.norm() > 1e-12 {
            return Err(Error::Invalid(
                "perturbation distance applies to types over the empty set".into(),
            ));
        }
    }
    let collect = |m: &crate::measure::AtomicMeasure| -> Result<(Vec<Complex64>, Vec<f64>)> {
        let mut pts = Vec::new();
        let mut roots = Vec::new();
        for (_, a) in m.atoms() {
            if model.block_index(a.point).is_none() {
                return Err(Error::Realization {
                    re: a.point.re,
                    im: a.point.im,
                });
            }
            pts.push(a.point);
            roots.push(a.mass.re.max(0.0).sqrt());
        }
        Ok((pts, roots))
    };
    let (pp, pr) = collect(mu)?;
    let (qp, qr) = collect(nu)?;

    if pp.len() <= PERT_BRUTE_LIMIT && qp.len() <= PERT_BRUTE_LIMIT {
        let mut best = f64::INFINITY;
        let mut best_pairs: Vec<(usize, usize)> = vec![];
        let mut assign: Vec<Option<usize>> = vec![None; pp.len()];
        let mut used = vec![false; qp.len()];
        brute(
            0,
            &pp,
            &pr,
            &qp,
            &qr,
            &mut assign,
            &mut used,
            &mut best,
            &mut best_pairs,
        );
        Ok(PertReport {
            bound: best,
            matched: best_pairs,
            exhaustive: true,
        })
    } else {
        // Threshold sweep: for every candidate shift bound, pair atoms
        // greedily by descending mass among those within the bound.
        let mut candidates: Vec<f64> = vec![0.0];
        for a in &pp {
            for b in &qp {
                candidates.push((a - b).norm());
            }
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        candidates.dedup();
        let mut best = f64::INFINITY;
        let mut best_pairs = vec![];
        for &t in &candidates {
            let mut order: Vec<usize> = (0..pp.len()).collect();
            order.sort_by(|&i, &j| pr[j].partial_cmp(&pr[i]).unwrap().then(i.cmp(&j)));
            let mut used = vec![false; qp.len()];
            let mut pairs = Vec::new();
            let mut mass_sq = 0.0;
            let mut shift: f64 = 0.0;
            for &i in &order {
                let mut pick: Option<usize> = None;
                let mut pick_gap = f64::INFINITY;
                for j in 0..qp.len() {
                    if used[j] || (pp[i] - qp[j]).norm() > t {
                        continue;
                    }
                    let gap = (pr[i] - qr[j]).abs();
                    if gap < pick_gap {
                        pick_gap = gap;
                        pick = Some(j);
                    }
                }
                match pick {
                    Some(j) => {
                        used[j] = true;
                        pairs.push((i, j));
                        mass_sq += (pr[i] - qr[j]) * (pr[i] - qr[j]);
                        shift = shift.max((pp[i] - qp[j]).norm());
                    }
                    None => mass_sq += pr[i] * pr[i],
                }
            }
            for j in 0..qp.len() {
                if !used[j] {
                    mass_sq += qr[j] * qr[j];
                }
            }
            let cost = shift.max(mass_sq.sqrt());
            if cost < best {
                best = cost;
                best_pairs = pairs;
            }
        }
        Ok(PertReport {
            bound: best,
            matched: best_pairs,
            exhaustive: false,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn brute(
    i: usize,
    pp: &[Complex64],
    pr: &[f64],
    qp: &[Complex64],
    qr: &[f64],
    assign: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    best: &mut f64,
    best_pairs: &mut Vec<(usize, usize)>,
) {
    if i == pp.len() {
        let mut mass_sq = 0.0;
        let mut shift: f64 = 0.0;
        for (a, choice) in assign.iter().enumerate() {
            match choice {
                Some(j) => {
                    mass_sq += (pr[a] - qr[*j]) * (pr[a] - qr[*j]);
                    shift = shift.max((pp[a] - qp[*j]).norm());
                }
                None => mass_sq += pr[a] * pr[a],
            }
        }
        for (j, u) in used.iter().enumerate() {
            if !u {
                mass_sq += qr[j] * qr[j];
            }
        }
        let cost = shift.max(mass_sq.sqrt());
        if cost < *best {
            *best = cost;
            *best_pairs = assign
                .iter()
                .enumerate()
                .filter_map(|(a, c)| c.map(|j| (a, j)))
                .collect();
        }
        return;
    }
    assign[i] = None;
    brute(i + 1, pp, pr, qp, qr, assign, used, best, best_pairs);
    for j in 0..qp.len() {
        if used[j] {
            continue;
        }
        if (pp[i] - qp[j]).norm() >= *best {
            continue;
        }
        used[j] = true;
        assign[i] = Some(j);
        brute(i + 1, pp, pr, qp, qr, assign, used, best, best_pairs);
        assign[i] = None;
        used[j] = false;
    }
}

#[derive(Serialize, Deserialize)]
struct TheoryAtomRepr {
    re: f64,
    im: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mult: Option<serde_json::Value>,
    isolated: bool,
}

#[derive(Serialize, Deserialize)]
struct TheoryRepr {
    atoms: Vec<TheoryAtomRepr>,
    #[serde(default)]
    perfect: Vec<BoxRegion>,
}

impl Serialize for TheoryDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TheoryRepr {
            atoms: self
                .atoms
                .iter()
                .map(|a| TheoryAtomRepr {
                    re: a.lambda.re,
                    im: a.lambda.im,
                    mult: a.mult.map(|m| match m {
                        Multiplicity::Finite(n) => serde_json::Value::from(n),
                        Multiplicity::Infinite => serde_json::Value::from("inf"),
                    }),
                    isolated: a.isolated,
                })
                .collect(),
            perfect: self.perfect.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TheoryDescriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TheoryRepr::deserialize(deserializer)?;
        let mut atoms = Vec::with_capacity(repr.atoms.len());
        for a in repr.atoms {
            let mult = match a.mult {
                None => None,
                Some(serde_json::Value::String(s)) if s == "inf" => {
                    Some(Multiplicity::Infinite)
                }
                Some(serde_json::Value::Number(n)) => {
                    let v = n
                        .as_u64()
                        .ok_or_else(|| D::Error::custom("multiplicity must be a positive integer"))?;
                    if v == 0 || v > u32::MAX as u64 {
                        return Err(D::Error::custom("multiplicity out of range"));
                    }
                    Some(Multiplicity::Finite(v as u32))
                }
                Some(_) => {
                    return Err(D::Error::custom(
                        "multiplicity must be a positive integer or \"inf\"",
                    ))
                }
            };
            atoms.push(TheoryAtom {
                lambda: Complex64::new(a.re, a.im),
                mult,
                isolated: a.isolated,
            });
        }
        let th = TheoryDescriptor {
            atoms,
            perfect: repr.perfect,
        };
        th.validate().map_err(D::Error::custom)?;
        Ok(th)
    }
}

/// Deduplicated sorted atom keys of a point list; used by tests.
pub fn distinct_keys(points: &[Complex64]) -> usize {
    points
        .iter()
        .map(|z| atom_key(*z))
        .collect::<BTreeSet<_>>()
        .len()
}
