//! Prime-field arithmetic over GF(q) and the seeded sampling used everywhere
//! else in the crate.
//!
//! Elements are stored as least nonnegative residues. Matrices keep raw `u64`
//! residues plus a single [`FieldModulus`]; [`FieldElement`] is the checked,
//! self-describing form used at API boundaries.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The Mersenne prime 2^31 - 1.
pub const DEFAULT_MODULUS: u64 = 2_147_483_647;

/// Moduli at or above this bound are rejected.
pub const MODULUS_LIMIT: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too large (must be below 2^62)")]
    TooLarge(u64),
    #[error("division by zero")]
    DivisionByZero,
}

/// A validated prime modulus.
///
/// Carries a precomputed Barrett constant so that reduction of a 64-bit
/// product avoids a hardware divide when `q < 2^32`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldModulus {
    q: u64,
    barrett: u64,
}

impl fmt::Debug for FieldModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.q)
    }
}

impl fmt::Display for FieldModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.q)
    }
}

/// Validates `q` and returns the field it names.
pub fn make_field(q: u64) -> Result<FieldModulus, FieldError> {
    FieldModulus::new(q)
}

impl Default for FieldModulus {
    fn default() -> Self {
        FieldModulus::new(DEFAULT_MODULUS).expect("default modulus is prime")
    }
}

impl FieldModulus {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q >= MODULUS_LIMIT {
            return Err(FieldError::TooLarge(q));
        }
        if !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        Ok(FieldModulus {
            q,
            barrett: u64::MAX / q,
        })
    }

    #[inline]
    pub fn q(&self) -> u64 {
        self.q
    }

    #[inline]
    fn small(&self) -> bool {
        self.q <= u32::MAX as u64
    }

    /// Reduces an arbitrary `u64`.
    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if self.small() {
            let est = ((x as u128 * self.barrett as u128) >> 64) as u64;
            let mut r = x - est * self.q;
            while r >= self.q {
                r -= self.q;
            }
            r
        } else {
            x % self.q
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        if self.small() {
            self.reduce(a * b)
        } else {
            ((a as u128 * b as u128) % self.q as u128) as u64
        }
    }

    /// `(acc + a * b) mod q` for reduced inputs.
    #[inline]
    pub fn mul_add(&self, acc: u64, a: u64, b: u64) -> u64 {
        if self.small() {
            // (q-1)^2 + (q-1) < 2^64 for q < 2^32
            self.reduce(acc + a * b)
        } else {
            ((acc as u128 + a as u128 * b as u128) % self.q as u128) as u64
        }
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut result = 1 % self.q;
        let mut b = base % self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                result = self.mul(result, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        result
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64, FieldError> {
        let a = a % self.q;
        if a == 0 {
            return Err(FieldError::DivisionByZero);
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn elem(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.q,
            modulus: *self,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.elem(0)
    }

    pub fn one(&self) -> FieldElement {
        self.elem(1)
    }
}

/// Deterministic Miller-Rabin; the base set is exact for all `n < 2^64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mulmod(r, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        r
    };
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// An element of GF(q) that remembers its field.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: FieldModulus,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mod {}", self.value, self.modulus.q)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> FieldModulus {
        self.modulus
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn inv(&self) -> Result<FieldElement, FieldError> {
        Ok(FieldElement {
            value: self.modulus.inv(self.value)?,
            modulus: self.modulus,
        })
    }

    pub fn pow(&self, exp: u64) -> FieldElement {
        FieldElement {
            value: self.modulus.pow(self.value, exp),
            modulus: self.modulus,
        }
    }

    #[inline]
    fn same_field(&self, other: &FieldElement) {
        assert_eq!(
            self.modulus, other.modulus,
            "field elements from different moduli"
        );
    }
}

/// Free-function form of [`FieldElement::inv`].
pub fn inv(a: FieldElement) -> Result<FieldElement, FieldError> {
    a.inv()
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        FieldElement {
            value: self.modulus.add(self.value, rhs.value),
            modulus: self.modulus,
        }
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        FieldElement {
            value: self.modulus.sub(self.value, rhs.value),
            modulus: self.modulus,
        }
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        FieldElement {
            value: self.modulus.mul(self.value, rhs.value),
            modulus: self.modulus,
        }
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement {
            value: self.modulus.neg(self.value),
            modulus: self.modulus,
        }
    }
}

/// Seeded generator used for every random choice in the crate.
///
/// The stream is ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`), which is
/// platform independent. Child generators are derived by hashing the parent
/// seed with a label (SHA-256, first eight bytes little-endian), so the same
/// `(seed, label)` always names the same stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator whose seed depends only on this generator's seed
    /// and `label`, not on how much of this stream has been consumed.
    pub fn child(&self, label: &str) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, label))
    }

    /// Uniform residue in `[0, q)`.
    pub fn residue(&mut self, modulus: FieldModulus) -> u64 {
        self.inner.gen_range(0..modulus.q())
    }

    pub fn residues(&mut self, modulus: FieldModulus, count: usize) -> Vec<u64> {
        (0..count).map(|_| self.residue(modulus)).collect()
    }

    /// Uniform index in `[0, bound)`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.gen_range(0..bound)
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha20Rng {
        &mut self.inner
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// `count` i.i.d. uniform elements of the field.
pub fn sample_uniform(
    rng: &mut SeededRng,
    modulus: FieldModulus,
    count: usize,
) -> Vec<FieldElement> {
    (0..count)
        .map(|_| modulus.elem(rng.residue(modulus)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn construction() {
        assert!(make_field(2_147_483_647).is_ok());
        assert!(make_field(7).is_ok());
        assert!(make_field(2).is_ok());
        assert_eq!(make_field(4), Err(FieldError::NotPrime(4)));
        assert_eq!(make_field(1), Err(FieldError::NotPrime(1)));
        assert_eq!(make_field(0), Err(FieldError::NotPrime(0)));
        assert_eq!(make_field(1 << 62), Err(FieldError::TooLarge(1 << 62)));
        // largest prime below 2^62
        assert!(make_field((1 << 62) - 57).is_ok());
        assert_eq!(make_field(561), Err(FieldError::NotPrime(561)));
    }

    #[test]
    fn primality_matches_trial_division() {
        for n in 0..5000u64 {
            let trial = n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
            assert_eq!(is_prime(n), trial, "n = {n}");
        }
    }

    #[test]
    fn inverse_examples() {
        let f = make_field(7).unwrap();
        assert_eq!(f.elem(3).inv().unwrap().value(), 5);
        assert_eq!(f.elem(1).inv().unwrap().value(), 1);
        assert_eq!(f.elem(0).inv(), Err(FieldError::DivisionByZero));
        assert_eq!(inv(f.elem(7)), Err(FieldError::DivisionByZero));

        let big = FieldModulus::default();
        let mut rng = SeededRng::new(11);
        for _ in 0..100 {
            let a = big.elem(rng.residue(big));
            if a.is_zero() {
                continue;
            }
            assert_eq!((a * a.inv().unwrap()).value(), 1);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = FieldModulus::default();
        assert!(sample_uniform(&mut SeededRng::new(5), f, 0).is_empty());
        let a = sample_uniform(&mut SeededRng::new(5), f, 5);
        let b = sample_uniform(&mut SeededRng::new(5), f, 5);
        assert_eq!(a, b);
        assert!(a.iter().all(|e| e.value() < f.q()));
    }

    #[test]
    fn sampling_binary_field_is_balanced() {
        // Binomial(10^4, 1/2) has sd 50; [4500, 5500] is a 10 sigma window.
        let f = make_field(2).unwrap();
        let ones = sample_uniform(&mut SeededRng::new(99), f, 10_000)
            .iter()
            .filter(|e| e.value() == 1)
            .count();
        assert!((4500..=5500).contains(&ones), "ones = {ones}");
    }

    #[test]
    fn child_seeds_depend_on_label_only() {
        let mut a = SeededRng::new(3);
        let b = SeededRng::new(3);
        rand::RngCore::next_u64(&mut a);
        assert_eq!(a.child("x").seed(), b.child("x").seed());
        assert_ne!(b.child("x").seed(), b.child("y").seed());
    }

    #[test]
    fn large_modulus_path() {
        let q = (1u64 << 61) - 1;
        let f = make_field(q).unwrap();
        let a = q - 2;
        let b = q - 3;
        assert_eq!(f.mul(a, b), 6);
        assert_eq!(f.mul(f.inv(a).unwrap(), a), 1);
    }

    fn moduli() -> impl Strategy<Value = u64> {
        prop_oneof![Just(2u64), Just(3), Just(7), Just(DEFAULT_MODULUS)]
    }

    proptest! {
        #[test]
        fn field_axioms(q in moduli(), a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let f = make_field(q).unwrap();
            let (a, b, c) = (f.elem(a), f.elem(b), f.elem(c));
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!(a + (-a), f.zero());
            prop_assert_eq!(a - b, a + (-b));
            if !a.is_zero() {
                prop_assert_eq!(a * a.inv().unwrap(), f.one());
                prop_assert_eq!(a.pow(q - 1), f.one());
            }
        }

        #[test]
        fn barrett_reduction_is_exact(x in any::<u64>()) {
            let f = FieldModulus::default();
            prop_assert_eq!(f.reduce(x), x % DEFAULT_MODULUS);
        }
    }
}
