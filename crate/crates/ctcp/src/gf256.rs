//! Arithmetic over GF(2^8) with the reduction polynomial
//! x^8 + x^4 + x^3 + x + 1 (0x11B).
//!
//! One field element per byte: coding coefficients and payload bytes share
//! the same representation, so a coded packet is a plain byte slice.
//! Multiplication and inversion go through compile-time log/antilog tables.

/// Low byte of the reduction polynomial 0x11B.
const POLY: u8 = 0x1B;

/// 0x03 generates the full multiplicative group for this polynomial
/// (0x02 does not; its order is only 51).
const GENERATOR: u8 = 0x03;

/// LOG[a] = discrete log of `a` base GENERATOR; LOG[0] unused, set to 0.
static LOG: [u8; 256] = build_tables().0;

/// EXP[i] = GENERATOR^i, doubled to 510 entries so `EXP[log a + log b]`
/// needs no reduction mod 255.
static EXP: [u8; 510] = build_tables().1;

const fn xtime(a: u8) -> u8 {
    let shifted = (a as u16) << 1;
    if shifted & 0x100 != 0 {
        (shifted as u8) ^ POLY
    } else {
        shifted as u8
    }
}

const fn build_tables() -> ([u8; 256], [u8; 510]) {
    let mut log = [0u8; 256];
    let mut exp = [0u8; 510];
    let mut x: u8 = 1;
    let mut i = 0usize;
    while i < 255 {
        exp[i] = x;
        exp[i + 255] = x;
        log[x as usize] = i as u8;
        // x <- x * GENERATOR, with GENERATOR = 3 = x + 1
        let _ = GENERATOR;
        x = xtime(x) ^ x;
        i += 1;
    }
    (log, exp)
}

/// An element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse. Panics on zero.
    #[inline]
    pub fn inv(self) -> Self {
        assert!(!self.is_zero(), "zero has no inverse in GF(256)");
        Self(EXP[255 - LOG[self.0 as usize] as usize])
    }
}

impl std::fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl std::ops::Add for Gf256 {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl std::ops::Sub for Gf256 {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        // characteristic 2: subtraction is addition
        self + rhs
    }
}

impl std::ops::Mul for Gf256 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        if self.0 == 0 || rhs.0 == 0 {
            return Self::ZERO;
        }
        Self(EXP[LOG[self.0 as usize] as usize + LOG[rhs.0 as usize] as usize])
    }
}

impl std::ops::Div for Gf256 {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        self * rhs.inv()
    }
}

impl std::ops::AddAssign for Gf256 {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl std::ops::MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

/// `dst[i] ^= c * src[i]` over the whole slice.
///
/// Panics if the slices differ in length.
#[inline]
pub fn addmul_slice(dst: &mut [u8], src: &[u8], c: Gf256) {
    assert_eq!(dst.len(), src.len(), "slice length mismatch");
    if c.is_zero() {
        return;
    }
    if c == Gf256::ONE {
        for (d, s) in dst.iter_mut().zip(src) {
            *d ^= s;
        }
        return;
    }
    let log_c = LOG[c.0 as usize] as usize;
    for (d, s) in dst.iter_mut().zip(src) {
        if *s != 0 {
            *d ^= EXP[LOG[*s as usize] as usize + log_c];
        }
    }
}

/// `dst[i] *= c` over the whole slice.
#[inline]
pub fn scale_slice(dst: &mut [u8], c: Gf256) {
    if c == Gf256::ONE {
        return;
    }
    if c.is_zero() {
        dst.fill(0);
        return;
    }
    let log_c = LOG[c.0 as usize] as usize;
    for d in dst.iter_mut() {
        if *d != 0 {
            *d = EXP[LOG[*d as usize] as usize + log_c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_table_covers_all_nonzero_elements() {
        let mut seen = [false; 256];
        for i in 0..255 {
            assert!(!seen[EXP[i] as usize], "EXP repeats at {i}");
            seen[EXP[i] as usize] = true;
        }
        assert!(!seen[0]);
    }

    #[test]
    fn zero_annihilates() {
        for a in 0..=255u8 {
            assert_eq!(Gf256(a) * Gf256::ZERO, Gf256::ZERO);
            assert_eq!(Gf256::ZERO * Gf256(a), Gf256::ZERO);
        }
    }

    #[test]
    fn one_is_identity() {
        for a in 0..=255u8 {
            assert_eq!(Gf256(a) * Gf256::ONE, Gf256(a));
        }
    }

    #[test]
    fn every_nonzero_element_has_inverse() {
        for a in 1..=255u8 {
            let inv = Gf256(a).inv();
            assert_eq!(Gf256(a) * inv, Gf256::ONE, "a={a}, inv={}", inv.0);
        }
    }

    #[test]
    fn addition_is_self_inverse() {
        for a in 0..=255u8 {
            assert_eq!(Gf256(a) + Gf256(a), Gf256::ZERO);
        }
    }

    #[test]
    fn multiplication_matches_carryless_reference() {
        // Shift-and-add reference, independent of the log/exp tables.
        fn slow_mul(mut a: u8, mut b: u8) -> u8 {
            let mut acc = 0u8;
            while b != 0 {
                if b & 1 != 0 {
                    acc ^= a;
                }
                a = xtime(a);
                b >>= 1;
            }
            acc
        }
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!((Gf256(a) * Gf256(b)).0, slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn distributive_over_slices() {
        let src = [0u8, 1, 2, 0x53, 0xca, 255];
        let mut dst = [7u8, 0, 9, 0x11, 0xfe, 1];
        let snapshot = dst;
        addmul_slice(&mut dst, &src, Gf256(0x1d));
        for i in 0..src.len() {
            assert_eq!(
                Gf256(dst[i]),
                Gf256(snapshot[i]) + Gf256(src[i]) * Gf256(0x1d)
            );
        }
    }

    #[test]
    #[should_panic(expected = "zero has no inverse")]
    fn inverse_of_zero_panics() {
        let _ = Gf256::ZERO.inv();
    }
}
