//! Canonical rounding and small numeric helpers shared by every module.

use num_complex::Complex64;

/// Decimal digits kept when deciding whether two spectrum atoms are the same
/// point. Atom identity everywhere in the crate is equality after rounding
/// to this many digits.
pub const CANON_DIGITS: i32 = 12;

const CANON_SCALE: f64 = 1e12;

/// Key under which a complex point is stored in every atom-indexed map.
/// Ordering is lexicographic in (re, im), which fixes the serialization
/// order of spectra and measure supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomKey(pub i64, pub i64);

impl AtomKey {
    /// Representative point of the key (the rounded coordinates).
    pub fn point(self) -> Complex64 {
        Complex64::new(self.0 as f64 / CANON_SCALE, self.1 as f64 / CANON_SCALE)
    }
}

/// Canonical 12-digit rounding of a complex point.
pub fn atom_key(z: Complex64) -> AtomKey {
    AtomKey(canon_component(z.re), canon_component(z.im))
}

fn canon_component(x: f64) -> i64 {
    let scaled = x * CANON_SCALE;
    // Half away from zero, with -0.0 normalized so 0.0 and -0.0 share a key.
    let r = scaled.round();
    if r == 0.0 {
        0
    } else {
        r as i64
    }
}

/// True when two points agree after canonical rounding.
pub fn same_atom(a: Complex64, b: Complex64) -> bool {
    atom_key(a) == atom_key(b)
}

pub fn is_finite_c(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Total order on complex numbers: by real part, then imaginary part.
/// Callers must guarantee finite values.
pub fn lex_cmp(a: Complex64, b: Complex64) -> std::cmp::Ordering {
    match a.re.partial_cmp(&b.re) {
        Some(std::cmp::Ordering::Equal) | None => a.im.partial_cmp(&b.im).unwrap(),
        Some(o) => o,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_merges_nearby_points() {
        let a = Complex64::new(0.5, 0.25);
        let b = Complex64::new(0.5 + 4.9e-13, 0.25 - 4.9e-13);
        assert!(same_atom(a, b));
        let c = Complex64::new(0.5 + 2.0e-12, 0.25);
        assert!(!same_atom(a, c));
    }

    #[test]
    fn negative_zero_normalizes() {
        assert_eq!(
            atom_key(Complex64::new(-0.0, 0.0)),
            atom_key(Complex64::new(0.0, -0.0))
        );
    }

    #[test]
    fn lex_order_sorts_by_re_then_im() {
        let mut v = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 2.0),
            Complex64::new(1.0, -3.0),
        ];
        v.sort_by(|a, b| lex_cmp(*a, *b));
        assert_eq!(v[0], Complex64::new(-1.0, 2.0));
        assert_eq!(v[1], Complex64::new(1.0, -3.0));
        assert_eq!(v[2], Complex64::new(1.0, 0.0));
    }
}
