//! Exact integer algebra on two-symbol words.
//!
//! Rotational words encode periodic orbits that step through `n` points on a
//! circle with rotation number `m/n`; the first `ℓ` positions (in rotation
//! order) carry the symbol `L`. Everything here is exact: indices are machine
//! integers, words are dense vectors, and the identities checked in the test
//! suite hold symbol for symbol.

use std::fmt;
use thiserror::Error;

/// Errors from word and index construction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymbolicError {
    #[error("m = {m} and n = {n} are not coprime")]
    NotCoprime { m: i64, n: i64 },
    #[error("invalid rotational parameters ell = {ell}, m = {m}, n = {n}")]
    InvalidParams { ell: i64, m: i64, n: i64 },
    #[error("index {index} out of range for word of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("family index k = {k}, dl = {dl} leaves the admissible range")]
    FamilyIndexOutOfRange { k: i64, dl: i64 },
    #[error("product form requires 0 <= dl <= k-1, got k = {k}, dl = {dl}")]
    ProductFormUnsupported { k: i64, dl: i64 },
}

/// One symbol of a two-branch itinerary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    L,
    R,
}

impl Symbol {
    /// The other symbol.
    pub fn toggled(self) -> Symbol {
        match self {
            Symbol::L => Symbol::R,
            Symbol::R => Symbol::L,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::L => write!(f, "L"),
            Symbol::R => write!(f, "R"),
        }
    }
}

/// A finite word over `{L, R}`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct SymbolWord {
    symbols: Vec<Symbol>,
}

impl SymbolWord {
    /// Builds a word from raw symbols.
    pub fn new(symbols: Vec<Symbol>) -> SymbolWord {
        SymbolWord { symbols }
    }

    /// Parses a word from a string of `L`/`R` characters.
    pub fn parse(text: &str) -> Result<SymbolWord, SymbolicError> {
        let mut symbols = Vec::with_capacity(text.len());
        for ch in text.chars() {
            match ch {
                'L' | 'l' => symbols.push(Symbol::L),
                'R' | 'r' => symbols.push(Symbol::R),
                _ => {
                    return Err(SymbolicError::InvalidParams { ell: 0, m: 0, n: 0 });
                }
            }
        }
        Ok(SymbolWord { symbols })
    }

    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// True when the word has no symbols.
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Symbol at position `i` (must be in range).
    pub fn get(&self, i: usize) -> Symbol {
        self.symbols[i]
    }

    /// Underlying symbol slice.
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Number of `L` symbols.
    pub fn count_l(&self) -> usize {
        self.symbols.iter().filter(|s| **s == Symbol::L).count()
    }

    /// Concatenation `self · other`.
    pub fn concat(&self, other: &SymbolWord) -> SymbolWord {
        let mut symbols = Vec::with_capacity(self.len() + other.len());
        symbols.extend_from_slice(&self.symbols);
        symbols.extend_from_slice(&other.symbols);
        SymbolWord { symbols }
    }

    /// `self` repeated `times` times.
    pub fn repeat(&self, times: usize) -> SymbolWord {
        let mut symbols = Vec::with_capacity(self.len() * times);
        for _ in 0..times {
            symbols.extend_from_slice(&self.symbols);
        }
        SymbolWord { symbols }
    }

    /// Sub-word on index range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> SymbolWord {
        SymbolWord {
            symbols: self.symbols[start..end].to_vec(),
        }
    }

    /// True when `other` is a cyclic rotation of `self`.
    pub fn cyclic_eq(&self, other: &SymbolWord) -> bool {
        if self.len() != other.len() {
            return false;
        }
        if self.is_empty() {
            return true;
        }
        let n = self.len();
        (0..n).any(|shift| (0..n).all(|j| self.symbols[(shift + j) % n] == other.symbols[j]))
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Euclidean gcd on nonnegative integers.
fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a.rem_euclid(b));
    }
    a
}

/// Multiplicative inverse of `m` modulo `n`.
///
/// Returns the unique `d` in `[1, n-1]` with `m·d ≡ 1 (mod n)`.
pub fn mult_inverse(m: i64, n: i64) -> Result<i64, SymbolicError> {
    if n < 2 || m < 1 || m >= n || gcd(m, n) != 1 {
        return Err(SymbolicError::NotCoprime { m, n });
    }
    // Extended Euclid tracking only the coefficient of m.
    let (mut r0, mut r1) = (n, m);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1);
    Ok(t0.rem_euclid(n))
}

/// Index data of a rotational word: `ℓ` left symbols, rotation number `m/n`,
/// and `d`, the multiplicative inverse of `m` modulo `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RotationalParams {
    pub ell: i64,
    pub m: i64,
    pub n: i64,
    pub d: i64,
}

impl RotationalParams {
    /// Validates `1 ≤ ℓ ≤ n−1`, `1 ≤ m < n`, `gcd(m,n) = 1` and computes `d`.
    pub fn new(ell: i64, m: i64, n: i64) -> Result<RotationalParams, SymbolicError> {
        if n < 2 || ell < 1 || ell > n - 1 {
            return Err(SymbolicError::InvalidParams { ell, m, n });
        }
        let d = mult_inverse(m, n)?;
        Ok(RotationalParams { ell, m, n, d })
    }

    /// The word described by these parameters.
    pub fn word(&self) -> SymbolWord {
        rotational_word(self.ell, self.m, self.n).expect("validated parameters")
    }

    /// `ℓ·d mod n`, the second index at which the word may be flipped without
    /// leaving the rotational family.
    pub fn ell_d_mod_n(&self) -> i64 {
        (self.ell * self.d).rem_euclid(self.n)
    }
}

/// The rotational word `W` of length `n` with `Wᵢ = L` iff `(i·m) mod n < ℓ`.
pub fn rotational_word(ell: i64, m: i64, n: i64) -> Result<SymbolWord, SymbolicError> {
    if n < 1 || ell < 0 || ell > n || m < 1 || m > n || gcd(m.rem_euclid(n).max(1), n) != 1 {
        return Err(SymbolicError::InvalidParams { ell, m, n });
    }
    let mut symbols = Vec::with_capacity(n as usize);
    let mut residue = 0i64;
    for _ in 0..n {
        symbols.push(if residue < ell { Symbol::L } else { Symbol::R });
        residue += m;
        if residue >= n {
            residue -= n;
        }
    }
    Ok(SymbolWord { symbols })
}

/// Left cyclic shift: `result_j = W_{(i+j) mod n}`. Negative `i` shifts right.
pub fn shift(w: &SymbolWord, i: i64) -> SymbolWord {
    let n = w.len();
    if n == 0 {
        return w.clone();
    }
    let offset = i.rem_euclid(n as i64) as usize;
    let mut symbols = Vec::with_capacity(n);
    for j in 0..n {
        symbols.push(w.symbols[(offset + j) % n]);
    }
    SymbolWord { symbols }
}

/// The word with symbol `i` toggled.
pub fn flip_at(w: &SymbolWord, i: usize) -> Result<SymbolWord, SymbolicError> {
    if i >= w.len() {
        return Err(SymbolicError::IndexOutOfRange {
            index: i,
            len: w.len(),
        });
    }
    let mut out = w.clone();
    out.symbols[i] = out.symbols[i].toggled();
    Ok(out)
}

/// The three sub-words a rotational word splits into.
///
/// `X` covers indices `0..(ℓd mod n)`, `Y` the rest, and `X̂` covers
/// `0..(n−d)`. By construction `X·Y` is the whole word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partitions {
    pub x: SymbolWord,
    pub y: SymbolWord,
    pub x_hat: SymbolWord,
}

/// Splits the word of `base` into `(X, Y, X̂)`. Requires `2 ≤ ℓ ≤ n−2`.
pub fn partitions(base: &RotationalParams) -> Result<Partitions, SymbolicError> {
    if base.ell < 2 || base.ell > base.n - 2 {
        return Err(SymbolicError::InvalidParams {
            ell: base.ell,
            m: base.m,
            n: base.n,
        });
    }
    let w = base.word();
    let cut = base.ell_d_mod_n() as usize;
    let hat_len = (base.n - base.d).rem_euclid(base.n) as usize;
    Ok(Partitions {
        x: w.slice(0, cut),
        y: w.slice(cut, w.len()),
        x_hat: w.slice(0, hat_len),
    })
}

/// Farey neighbours of `m/n` with denominators below `n`, together with the
/// induced left/right `ℓ` offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FareyRoots {
    /// `(m⁻, n⁻)` with `m·n⁻ − m⁻·n = 1`.
    pub left: (i64, i64),
    /// `(m⁺, n⁺)` with `m⁺·n − m·n⁺ = 1`.
    pub right: (i64, i64),
    /// `floor(ℓ·n⁻/n)`.
    pub ell_left: i64,
    /// `ceil(ℓ·n⁺/n)`.
    pub ell_right: i64,
}

/// Farey neighbours of the rotation number of `base`.
pub fn farey_roots(base: &RotationalParams) -> FareyRoots {
    let (ell, m, n, d) = (base.ell, base.m, base.n, base.d);
    let n_left = d;
    let m_left = (m * d - 1) / n;
    let n_right = n - d;
    let m_right = (m * n_right + 1) / n;
    FareyRoots {
        left: (m_left, n_left),
        right: (m_right, n_right),
        ell_left: (ell * n_left).div_euclid(n),
        ell_right: -((-(ell * n_right)).div_euclid(n)),
    }
}

/// Side of the two-parameter word family derived from a base word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilySign {
    Plus,
    Minus,
}

impl fmt::Display for FamilySign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySign::Plus => write!(f, "+"),
            FamilySign::Minus => write!(f, "-"),
        }
    }
}

/// Index data of a family word: rotation number `m_k/n_k` obtained by
/// mediant-stepping `k` times toward the chosen Farey neighbour, with `ℓ`
/// offset `Δℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GFamilyIndex {
    pub sign: FamilySign,
    pub k: i64,
    pub dl: i64,
    /// `ℓ` index of the family word, including the `Δℓ` offset.
    pub ell: i64,
    pub m: i64,
    pub n: i64,
    pub d: i64,
}

impl GFamilyIndex {
    /// Builds the index for `sign`, `k ≥ 1`, `|Δℓ| < k` over `base`.
    pub fn new(
        sign: FamilySign,
        k: i64,
        dl: i64,
        base: &RotationalParams,
    ) -> Result<GFamilyIndex, SymbolicError> {
        if k < 1 || dl.abs() >= k {
            return Err(SymbolicError::FamilyIndexOutOfRange { k, dl });
        }
        let roots = farey_roots(base);
        let ((mr, nr), ell_r) = match sign {
            FamilySign::Plus => (roots.right, roots.ell_right),
            FamilySign::Minus => (roots.left, roots.ell_left),
        };
        let m_k = k * base.m + mr;
        let n_k = k * base.n + nr;
        let ell_k = k * base.ell + ell_r + dl;
        if ell_k < 1 || ell_k > n_k - 1 {
            return Err(SymbolicError::FamilyIndexOutOfRange { k, dl });
        }
        let d_k = mult_inverse(m_k, n_k)?;
        Ok(GFamilyIndex {
            sign,
            k,
            dl,
            ell: ell_k,
            m: m_k,
            n: n_k,
            d: d_k,
        })
    }

    /// The rotational parameters of the family word itself.
    pub fn params(&self) -> RotationalParams {
        RotationalParams {
            ell: self.ell,
            m: self.m,
            n: self.n,
            d: self.d,
        }
    }
}

/// The family word for `(sign, k, Δℓ)` over `base`, with its index data.
pub fn g_word(
    sign: FamilySign,
    k: i64,
    dl: i64,
    base: &RotationalParams,
) -> Result<(SymbolWord, GFamilyIndex), SymbolicError> {
    let idx = GFamilyIndex::new(sign, k, dl, base)?;
    let w = rotational_word(idx.ell, idx.m, idx.n)?;
    Ok((w, idx))
}

/// The plus-family word assembled from sub-words:
/// `(X·Y⁰̄)^Δℓ · X̂ · (S⁽⁻ᵈ⁾)^(k−Δℓ)` where `Y⁰̄` is `Y` with its first
/// symbol toggled and `S⁽⁻ᵈ⁾` is the base word shifted left by `−d`.
pub fn g_word_product(
    k: i64,
    dl: i64,
    base: &RotationalParams,
) -> Result<SymbolWord, SymbolicError> {
    if k < 1 || dl < 0 || dl > k - 1 {
        return Err(SymbolicError::ProductFormUnsupported { k, dl });
    }
    let parts = partitions(base)?;
    let y_flipped = flip_at(&parts.y, 0)?;
    let s_shift = shift(&base.word(), -base.d);
    let block = parts.x.concat(&y_flipped);
    Ok(block
        .repeat(dl as usize)
        .concat(&parts.x_hat)
        .concat(&s_shift.repeat((k - dl) as usize)))
}
