//! Bit strings and matrices over GF(2), plus the Toeplitz universal hash family.
//!
//! Every post-processing kernel in this crate is a GF(2)-linear map, so it can
//! be applied share by share: `f(a ^ b) == f(a) ^ f(b)`.
//!
//! # Serialized form
//!
//! A [`BitString`] encodes as a 4-byte little-endian bit count followed by
//! `ceil(len / 8)` data bytes. Bit `i` lives in byte `i / 8` at bit position
//! `i % 8` (least significant first); unused high bits of the last byte are zero.
//! JSON carries the same bytes as a lowercase hex string.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const WORD: usize = 64;

fn word_count(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// Fixed-length vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; word_count(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = Self {
            len,
            words: vec![u64::MAX; word_count(len)],
        };
        s.clear_padding();
        s
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = Self::zeros(0);
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Low `len` bits of `value`, bit 0 first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD);
        let mut s = Self::zeros(len);
        if len > 0 {
            s.words[0] = value;
            s.clear_padding();
        }
        s
    }

    /// Bits packed as an integer, bit 0 least significant. Only for `len <= 64`.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= WORD);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        let mut s = Self {
            len,
            words: (0..word_count(len)).map(|_| rng.gen::<u64>()).collect(),
        };
        s.clear_padding();
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(WORD) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    pub fn xor_assign(&mut self, other: &Self) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &Self) -> Result<bool> {
        self.check_len(other)?;
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones % 2 == 1)
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        self.check_len(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// 64 bits starting at `offset`, zero beyond the end.
    fn word_at(&self, offset: usize) -> u64 {
        if offset >= self.len {
            return 0;
        }
        let (w, b) = (offset / WORD, offset % WORD);
        let lo = self.words[w] >> b;
        if b == 0 {
            return lo;
        }
        let hi = self.words.get(w + 1).map_or(0, |x| x << (WORD - b));
        lo | hi
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = Self {
            len,
            words: (0..word_count(len))
                .map(|k| self.word_at(start + k * WORD))
                .collect(),
        };
        out.clear_padding();
        out
    }

    pub fn truncated(&self, len: usize) -> Self {
        self.slice(0, len)
    }

    /// Coordinate projection onto `positions`, in the given order.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self::from_bits(positions.iter().map(|&p| self.get(p)))
    }

    pub fn append(&mut self, other: &Self) {
        for b in other.iter() {
            self.push(b);
        }
    }

    pub fn concat<'a, I: IntoIterator<Item = &'a BitString>>(parts: I) -> Self {
        let mut out = Self::zeros(0);
        for p in parts {
            out.append(p);
        }
        out
    }

    /// `self` placed at bit `offset` of an otherwise zero string of length `total`.
    pub fn zero_padded(&self, offset: usize, total: usize) -> Self {
        assert!(offset + self.len <= total);
        let mut out = Self::zeros(total);
        for (i, b) in self.iter().enumerate() {
            if b {
                out.set(offset + i, true);
            }
        }
        out
    }

    fn clear_padding(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let len = u32::try_from(self.len).expect("bit string longer than u32::MAX");
        let mut out = len.to_le_bytes().to_vec();
        let nbytes = self.len.div_ceil(8);
        for k in 0..nbytes {
            out.push((self.words[k / 8] >> ((k % 8) * 8)) as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Malformed("missing length prefix".into()));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let body = &bytes[4..];
        if body.len() != len.div_ceil(8) {
            return Err(Error::Malformed(format!(
                "{} data bytes for {} bits",
                body.len(),
                len
            )));
        }
        let mut s = Self::zeros(len);
        for (k, &byte) in body.iter().enumerate() {
            s.words[k / 8] |= u64::from(byte) << ((k % 8) * 8);
        }
        let mut trimmed = s.clone();
        trimmed.clear_padding();
        if trimmed != s {
            return Err(Error::Malformed("non-zero padding bits".into()));
        }
        Ok(s)
    }
}

impl FromStr for BitString {
    type Err = Error;

    /// Parses `"0101"`, first character is bit 0.
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Malformed(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len, self.count_ones())
        }
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        BitString::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

/// XOR of a non-empty collection of equal-length strings.
pub fn xor_all<'a, I: IntoIterator<Item = &'a BitString>>(parts: I) -> Result<BitString> {
    let mut iter = parts.into_iter();
    let mut acc = iter
        .next()
        .ok_or_else(|| Error::InvalidParameter("xor of zero strings".into()))?
        .clone();
    for p in iter {
        acc.xor_assign(p)?;
    }
    Ok(acc)
}

/// Dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Gf2Matrix {
    cols: usize,
    rows: Vec<BitString>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            cols,
            rows: vec![BitString::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(cols: usize, rows: Vec<BitString>) -> Result<Self> {
        for r in &rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
        }
        Ok(Self { cols, rows })
    }

    /// Rows given as `"0101"` strings.
    pub fn parse_rows(rows: &[&str]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| r.parse::<BitString>())
            .collect::<Result<Vec<_>>>()?;
        let cols = parsed.first().map_or(0, BitString::len);
        Self::from_rows(cols, parsed)
    }

    /// Each row is the indicator vector of one position set.
    pub fn from_supports(cols: usize, supports: &[Vec<usize>]) -> Self {
        let rows = supports
            .iter()
            .map(|s| {
                let mut r = BitString::zeros(cols);
                for &p in s {
                    r.set(p, true);
                }
                r
            })
            .collect();
        Self { cols, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitString {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.rows[i].set(j, v);
    }

    pub fn mat_vec(&self, v: &BitString) -> Result<BitString> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: v.len(),
            });
        }
        Ok(BitString::from_bits(
            self.rows.iter().map(|r| r.dot(v).expect("row width checked")),
        ))
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            cols: cols.len(),
            rows: self.rows.iter().map(|r| r.select(cols)).collect(),
        }
    }

    /// Row rank by Gaussian elimination.
    pub fn rank(&self) -> usize {
        let mut rows: Vec<Vec<u64>> = self.rows.iter().map(|r| r.words.clone()).collect();
        let mut rank = 0;
        for col in 0..self.cols {
            let (w, mask) = (col / WORD, 1u64 << (col % WORD));
            let Some(pivot) = (rank..rows.len()).find(|&i| rows[i][w] & mask != 0) else {
                continue;
            };
            rows.swap(rank, pivot);
            let pivot_row = rows[rank].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != rank && row[w] & mask != 0 {
                    for (a, b) in row.iter_mut().zip(&pivot_row) {
                        *a ^= b;
                    }
                }
            }
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        rank
    }
}

/// Linear universal₂ hash given by a diagonal-constant matrix.
///
/// `entry(i, j) == seed[i - j + in_len - 1]`, so the seed has `out_len + in_len - 1` bits.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ToeplitzHash {
    out_len: usize,
    in_len: usize,
    seed: BitString,
    #[serde(skip)]
    reversed: BitString,
}

pub fn toeplitz_seed_len(out_len: usize, in_len: usize) -> usize {
    (out_len + in_len).saturating_sub(1)
}

impl ToeplitzHash {
    pub fn sample(out_len: usize, in_len: usize, randomness: &BitString) -> Result<Self> {
        let expected = toeplitz_seed_len(out_len, in_len);
        if randomness.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: randomness.len(),
            });
        }
        let reversed = BitString::from_bits((0..expected).rev().map(|k| randomness.get(k)));
        Ok(Self {
            out_len,
            in_len,
            seed: randomness.clone(),
            reversed,
        })
    }

    /// Square hash acting as the identity map.
    pub fn identity(n: usize) -> Self {
        let mut seed = BitString::zeros(toeplitz_seed_len(n, n));
        if n > 0 {
            seed.set(n - 1, true);
        }
        Self::sample(n, n, &seed).expect("seed length matches")
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn seed(&self) -> &BitString {
        &self.seed
    }

    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.seed.get(i + self.in_len - 1 - j)
    }

    pub fn to_matrix(&self) -> Gf2Matrix {
        let rows = (0..self.out_len).map(|i| self.row(i)).collect();
        Gf2Matrix::from_rows(self.in_len, rows).expect("rows have in_len bits")
    }

    // Row i is the contiguous window reversed[out_len-1-i .. out_len-1-i+in_len].
    fn row(&self, i: usize) -> BitString {
        self.reversed.slice(self.out_len - 1 - i, self.in_len)
    }

    pub fn apply(&self, v: &BitString) -> Result<BitString> {
        if v.len() != self.in_len {
            return Err(Error::DimensionMismatch {
                expected: self.in_len,
                actual: v.len(),
            });
        }
        Ok(BitString::from_bits((0..self.out_len).map(|i| {
            let start = self.out_len - 1 - i;
            (0..word_count(self.in_len))
                .map(|k| {
                    let mut w = self.reversed.word_at(start + k * WORD);
                    let remaining = self.in_len - k * WORD;
                    if remaining < WORD {
                        w &= (1u64 << remaining) - 1;
                    }
                    (w & v.words[k]).count_ones()
                })
                .sum::<u32>()
                % 2
                == 1
        })))
    }
}

/// Hash length needed for an error-verification failure probability of `eps_cor`.
pub fn verification_hash_len(eps_cor: f64) -> usize {
    (4.0 / eps_cor).log2().ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn xor_examples() {
        assert_eq!(bs("1010").xor(&bs("1010")).unwrap(), bs("0000"));
        assert_eq!(bs("1010").xor(&bs("0000")).unwrap(), bs("1010"));
        assert_eq!(bs("1010").xor(&bs("0110")).unwrap(), bs("1100"));
        assert!(matches!(
            bs("101").xor(&bs("1010")),
            Err(Error::LengthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn xor_group_laws_exhaustive() {
        for len in 0..=4usize {
            let all: Vec<BitString> = (0..1u64 << len).map(|v| BitString::from_u64(v, len)).collect();
            for a in &all {
                assert_eq!(a.xor(a).unwrap(), BitString::zeros(len));
                for b in &all {
                    assert_eq!(a.xor(b).unwrap(), b.xor(a).unwrap());
                    for c in &all {
                        let l = a.xor(b).unwrap().xor(c).unwrap();
                        let r = a.xor(&b.xor(c).unwrap()).unwrap();
                        assert_eq!(l, r);
                    }
                }
            }
        }
        // length 8: commutativity and self-inverse over all pairs
        let all: Vec<BitString> = (0..256).map(|v| BitString::from_u64(v, 8)).collect();
        for a in &all {
            for b in &all {
                assert_eq!(a.xor(b).unwrap(), b.xor(a).unwrap());
                assert_eq!(a.xor(b).unwrap().xor(b).unwrap(), *a);
            }
        }
    }

    #[test]
    fn mat_vec_examples() {
        let i4 = Gf2Matrix::identity(4);
        assert_eq!(i4.mat_vec(&bs("1011")).unwrap(), bs("1011"));
        let z = Gf2Matrix::zeros(3, 4);
        assert_eq!(z.mat_vec(&bs("1111")).unwrap(), bs("000"));
        let m = Gf2Matrix::parse_rows(&["110", "011"]).unwrap();
        assert_eq!(m.mat_vec(&bs("110")).unwrap(), bs("01"));
        assert!(matches!(
            m.mat_vec(&bs("11")),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(Gf2Matrix::identity(4).rank(), 4);
        assert_eq!(Gf2Matrix::zeros(3, 5).rank(), 0);
        assert_eq!(Gf2Matrix::parse_rows(&["11", "11"]).unwrap().rank(), 1);
        assert_eq!(Gf2Matrix::parse_rows(&["110", "011", "101"]).unwrap().rank(), 2);
    }

    #[test]
    fn rank_wide_matrix_crosses_words() {
        let mut m = Gf2Matrix::zeros(3, 200);
        m.set(0, 150, true);
        m.set(1, 70, true);
        m.set(2, 150, true);
        m.set(2, 70, true);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn sample_toeplitz_examples() {
        let h = ToeplitzHash::sample(1, 1, &bs("1")).unwrap();
        assert_eq!(h.to_matrix(), Gf2Matrix::parse_rows(&["1"]).unwrap());

        // diagonals d(-2..=1) = 0,1,1,1 under entry(i,j) = seed[i-j+2]
        let h = ToeplitzHash::sample(2, 3, &bs("0111")).unwrap();
        assert_eq!(h.to_matrix(), Gf2Matrix::parse_rows(&["110", "111"]).unwrap());

        let h = ToeplitzHash::sample(2, 3, &bs("1011")).unwrap();
        assert_eq!(h.to_matrix(), Gf2Matrix::parse_rows(&["101", "110"]).unwrap());

        // 2x3 needs a 4-bit seed
        assert!(ToeplitzHash::sample(2, 3, &bs("10110")).is_err());

        let again = ToeplitzHash::sample(2, 3, &bs("1011")).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn toeplitz_apply_matches_matrix_expansion() {
        let h = ToeplitzHash::sample(2, 3, &bs("1011")).unwrap();
        let v = bs("101");
        // brute-force oracle straight from the index formula
        let seed = bs("1011");
        let expect = BitString::from_bits((0..2).map(|i| {
            (0..3).fold(false, |acc, j| acc ^ (seed.get(i + 2 - j) & v.get(j)))
        }));
        assert_eq!(h.apply(&v).unwrap(), expect);
        assert_eq!(h.apply(&v).unwrap(), bs("01"));
        assert_eq!(h.apply(&v).unwrap(), h.to_matrix().mat_vec(&v).unwrap());
        assert!(h.apply(&bs("10")).is_err());
    }

    #[test]
    fn toeplitz_zero_cases_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seed = BitString::random(&mut rng, toeplitz_seed_len(7, 90));
        let h = ToeplitzHash::sample(7, 90, &seed).unwrap();
        assert_eq!(h.apply(&BitString::zeros(90)).unwrap(), BitString::zeros(7));
        let zero = ToeplitzHash::sample(7, 90, &BitString::zeros(96)).unwrap();
        assert_eq!(zero.apply(&BitString::random(&mut rng, 90)).unwrap(), BitString::zeros(7));
        let id = ToeplitzHash::identity(70);
        let v = BitString::random(&mut rng, 70);
        assert_eq!(id.apply(&v).unwrap(), v);
    }

    #[test]
    fn toeplitz_linearity_many_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (out, inp) in [(4, 9), (16, 130), (33, 64)] {
            let h = ToeplitzHash::sample(out, inp, &BitString::random(&mut rng, toeplitz_seed_len(out, inp)))
                .unwrap();
            for _ in 0..1000 {
                let a = BitString::random(&mut rng, inp);
                let b = BitString::random(&mut rng, inp);
                let lhs = h.apply(&a.xor(&b).unwrap()).unwrap();
                let rhs = h.apply(&a).unwrap().xor(&h.apply(&b).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn toeplitz_universality_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 20_000u32;
        for out in [4usize, 8] {
            let inp = 24;
            let mut collisions = 0u32;
            for _ in 0..trials {
                let x = BitString::random(&mut rng, inp);
                let mut y = BitString::random(&mut rng, inp);
                if x == y {
                    y.flip(0);
                }
                let h = ToeplitzHash::sample(out, inp, &BitString::random(&mut rng, toeplitz_seed_len(out, inp)))
                    .unwrap();
                if h.apply(&x).unwrap() == h.apply(&y).unwrap() {
                    collisions += 1;
                }
            }
            let p = 2f64.powi(-(out as i32));
            let sigma = (p * (1.0 - p) / f64::from(trials)).sqrt();
            let freq = f64::from(collisions) / f64::from(trials);
            assert!(freq <= p + 3.0 * sigma, "out={out}: {freq} > {p} + 3σ");
        }
    }

    #[test]
    fn hash_length_for_eps_cor() {
        // ceil(log2(4e10)) = ceil(35.22)
        assert_eq!(verification_hash_len(1e-10), 36);
        assert_eq!(verification_hash_len(0.25), 4);
    }

    #[test]
    fn byte_encoding_vectors() {
        assert_eq!(bs("1011").to_bytes(), vec![4, 0, 0, 0, 0b1101]);
        assert_eq!(BitString::zeros(0).to_bytes(), vec![0, 0, 0, 0]);
        let nine = bs("100000001");
        assert_eq!(nine.to_bytes(), vec![9, 0, 0, 0, 0x01, 0x01]);
        assert!(BitString::from_bytes(&[4, 0, 0, 0, 0b1_0000]).is_err());
        assert!(BitString::from_bytes(&[4, 0, 0, 0]).is_err());
        assert_eq!(serde_json::to_string(&bs("1011")).unwrap(), "\"040000000d\"");
    }

    proptest! {
        #[test]
        fn bytes_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let s = BitString::from_bits(bits);
            prop_assert_eq!(BitString::from_bytes(&s.to_bytes()).unwrap(), s.clone());
            let json = serde_json::to_string(&s).unwrap();
            prop_assert_eq!(serde_json::from_str::<BitString>(&json).unwrap(), s);
        }

        #[test]
        fn mat_vec_distributes_over_xor(
            rows in 1usize..20, cols in 1usize..150, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Gf2Matrix::from_rows(cols, (0..rows).map(|_| BitString::random(&mut rng, cols)).collect()).unwrap();
            let a = BitString::random(&mut rng, cols);
            let b = BitString::random(&mut rng, cols);
            prop_assert_eq!(
                m.mat_vec(&a.xor(&b).unwrap()).unwrap(),
                m.mat_vec(&a).unwrap().xor(&m.mat_vec(&b).unwrap()).unwrap()
            );
            prop_assert!(m.rank() <= rows.min(cols));
        }

        #[test]
        fn slice_matches_bitwise(bits in proptest::collection::vec(any::<bool>(), 1..300), a in 0usize..300, b in 0usize..300) {
            let s = BitString::from_bits(bits.clone());
            let start = a % s.len();
            let len = b % (s.len() - start + 1);
            prop_assert_eq!(s.slice(start, len), BitString::from_bits(bits[start..start + len].iter().copied()));
        }
    }
}
