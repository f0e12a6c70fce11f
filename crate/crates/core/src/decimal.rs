//! Scale-18 signed fixed-point decimal.
//!
//! A `Decimal` is an `i128` mantissa with an implied factor of 10^18,
//! which matches the precision most on-chain tokens use. Addition and
//! subtraction are exact. Multiplication and division go through a single
//! `mul_div` primitive that holds the intermediate product at 256 bits and
//! rounds once, so `a * b / c` never loses precision in the middle.
//!
//! Every operation that can overflow returns [`MathError`] instead of
//! wrapping or panicking.

use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

/// Number of fractional decimal digits.
pub const SCALE_DIGITS: u32 = 18;

/// 10^18, the mantissa of `1`.
pub const SCALE: i128 = 1_000_000_000_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MathError {
    Overflow,
    DivisionByZero,
}

impl fmt::Display for MathError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MathError::Overflow => f.write_str("arithmetic overflow"),
            MathError::DivisionByZero => f.write_str("division by zero"),
        }
    }
}

/// How the single division inside [`Decimal::mul_div`] is rounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rounding {
    /// Toward zero. The engine default.
    #[default]
    Down,
    /// To nearest, ties away from zero.
    HalfUp,
    /// Away from zero.
    Up,
}

impl Rounding {
    pub fn name(self) -> &'static str {
        match self {
            Rounding::Down => "down",
            Rounding::HalfUp => "half-up",
            Rounding::Up => "up",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "down" => Some(Rounding::Down),
            "half-up" => Some(Rounding::HalfUp),
            "up" => Some(Rounding::Up),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(i128);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseDecimalError {
    Empty,
    InvalidCharacter,
    /// Exponent notation is refused so every accepted string is exact.
    Exponent,
    TooManyFractionDigits,
    Overflow,
}

impl fmt::Display for ParseDecimalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            ParseDecimalError::Empty => "empty decimal",
            ParseDecimalError::InvalidCharacter => "invalid character in decimal",
            ParseDecimalError::Exponent => "exponent notation is not allowed",
            ParseDecimalError::TooManyFractionDigits => "more than 18 fractional digits",
            ParseDecimalError::Overflow => "decimal out of range",
        };
        f.write_str(msg)
    }
}

impl Decimal {
    pub const ZERO: Decimal = Decimal(0);
    pub const ONE: Decimal = Decimal(SCALE);
    /// Smallest positive value, one unit in the last place.
    pub const ULP: Decimal = Decimal(1);
    pub const MAX: Decimal = Decimal(i128::MAX);

    pub const fn from_mantissa(m: i128) -> Self {
        Decimal(m)
    }

    pub const fn mantissa(self) -> i128 {
        self.0
    }

    pub fn from_int(n: i64) -> Self {
        Decimal(n as i128 * SCALE)
    }

    /// `n / 10^digits`, e.g. `from_parts(15, 1)` is 1.5.
    pub fn from_parts(n: i64, digits: u32) -> Result<Self, MathError> {
        if digits > SCALE_DIGITS {
            return Err(MathError::Overflow);
        }
        let factor = 10i128.pow(SCALE_DIGITS - digits);
        (n as i128).checked_mul(factor).map(Decimal).ok_or(MathError::Overflow)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn signum(self) -> i32 {
        self.0.signum() as i32
    }

    pub fn abs(self) -> Result<Self, MathError> {
        self.0.checked_abs().map(Decimal).ok_or(MathError::Overflow)
    }

    pub fn neg(self) -> Result<Self, MathError> {
        self.0.checked_neg().map(Decimal).ok_or(MathError::Overflow)
    }

    pub fn add(self, rhs: Self) -> Result<Self, MathError> {
        self.0.checked_add(rhs.0).map(Decimal).ok_or(MathError::Overflow)
    }

    pub fn sub(self, rhs: Self) -> Result<Self, MathError> {
        self.0.checked_sub(rhs.0).map(Decimal).ok_or(MathError::Overflow)
    }

    pub fn min(self, rhs: Self) -> Self {
        if self <= rhs {
            self
        } else {
            rhs
        }
    }

    pub fn max(self, rhs: Self) -> Self {
        if self >= rhs {
            self
        } else {
            rhs
        }
    }

    /// `max(0, self)`.
    pub fn clamp_non_negative(self) -> Self {
        self.max(Decimal::ZERO)
    }

    /// `self * b / c`, with the product held at double width and one
    /// rounding step at the end.
    pub fn mul_div(self, b: Decimal, c: Decimal, rounding: Rounding) -> Result<Self, MathError> {
        mul_div_raw(self.0, b.0, c.0, rounding).map(Decimal)
    }

    pub fn mul(self, rhs: Decimal, rounding: Rounding) -> Result<Self, MathError> {
        mul_div_raw(self.0, rhs.0, SCALE, rounding).map(Decimal)
    }

    pub fn div(self, rhs: Decimal, rounding: Rounding) -> Result<Self, MathError> {
        mul_div_raw(self.0, SCALE, rhs.0, rounding).map(Decimal)
    }

    /// Sum of an iterator, failing on overflow.
    pub fn checked_sum<I: IntoIterator<Item = Decimal>>(iter: I) -> Result<Self, MathError> {
        iter.into_iter().try_fold(Decimal::ZERO, |acc, x| acc.add(x))
    }
}

/// Exact comparison of `a·b` against `c·d`, with no rounding.
pub fn cmp_products(a: Decimal, b: Decimal, c: Decimal, d: Decimal) -> Ordering {
    let left_neg = (a.0 < 0) ^ (b.0 < 0) && a.0 != 0 && b.0 != 0;
    let right_neg = (c.0 < 0) ^ (d.0 < 0) && c.0 != 0 && d.0 != 0;
    let left = widening_mul(a.0.unsigned_abs(), b.0.unsigned_abs());
    let right = widening_mul(c.0.unsigned_abs(), d.0.unsigned_abs());
    match (left_neg, right_neg) {
        (false, true) => Ordering::Greater,
        (true, false) => Ordering::Less,
        (false, false) => left.cmp(&right),
        (true, true) => right.cmp(&left),
    }
}

/// Signed `a * b / c` on raw mantissas.
pub fn mul_div_raw(a: i128, b: i128, c: i128, rounding: Rounding) -> Result<i128, MathError> {
    if c == 0 {
        return Err(MathError::DivisionByZero);
    }
    let negative = (a < 0) ^ (b < 0) ^ (c < 0);
    let (ua, ub, uc) = (a.unsigned_abs(), b.unsigned_abs(), c.unsigned_abs());
    let (hi, lo) = widening_mul(ua, ub);
    let (mut q, r) = div_256_by_128(hi, lo, uc)?;
    if r != 0 {
        let bump = match rounding {
            Rounding::Down => false,
            Rounding::Up => true,
            // r >= c - r  <=>  2r >= c, computed without overflowing.
            Rounding::HalfUp => r >= uc - r,
        };
        if bump {
            q = q.checked_add(1).ok_or(MathError::Overflow)?;
        }
    }
    if negative {
        if q > i128::MAX as u128 + 1 {
            return Err(MathError::Overflow);
        }
        Ok((q as i128).wrapping_neg())
    } else {
        i128::try_from(q).map_err(|_| MathError::Overflow)
    }
}

/// Full 256-bit product of two u128, returned as (high, low).
fn widening_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);

    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;

    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let lo = (ll & MASK) | (mid << 64);
    let hi = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (hi, lo)
}

/// (hi·2^128 + lo) / d, returning quotient and remainder. The quotient
/// must fit in 128 bits.
fn div_256_by_128(hi: u128, lo: u128, d: u128) -> Result<(u128, u128), MathError> {
    if hi == 0 {
        return Ok((lo / d, lo % d));
    }
    if hi >= d {
        return Err(MathError::Overflow);
    }
    if d <= u64::MAX as u128 {
        // Schoolbook over 64-bit limbs; every partial dividend fits in u128.
        let d64 = d;
        let limbs = [(lo & u64::MAX as u128), lo >> 64];
        let mut rem = hi; // < d, so < 2^64
        let mut q: u128 = 0;
        for limb in limbs.iter().rev() {
            let cur = (rem << 64) | *limb;
            let digit = cur / d64;
            rem = cur % d64;
            q = (q << 64) | digit;
        }
        return Ok((q, rem));
    }
    // Restoring shift-subtract division; remainder starts below d.
    let mut rem = hi;
    let mut q: u128 = 0;
    for i in (0..128).rev() {
        let carry = rem >> 127;
        rem = (rem << 1) | ((lo >> i) & 1);
        if carry == 1 || rem >= d {
            rem = rem.wrapping_sub(d);
            q |= 1u128 << i;
        }
    }
    Ok((q, rem))
}

impl PartialOrd<i64> for Decimal {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        Some(self.0.cmp(&(*other as i128 * SCALE)))
    }
}

impl PartialEq<i64> for Decimal {
    fn eq(&self, other: &i64) -> bool {
        self.0 == *other as i128 * SCALE
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    /// Accepts `[+-]digits[.digits]` with at most 18 fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseDecimalError::Empty);
        }
        if s.contains(['e', 'E']) {
            return Err(ParseDecimalError::Exponent);
        }
        let (negative, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ParseDecimalError::Empty);
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(ParseDecimalError::InvalidCharacter);
        }
        if frac_part.len() > SCALE_DIGITS as usize {
            return Err(ParseDecimalError::TooManyFractionDigits);
        }
        let mut m: i128 = 0;
        for b in int_part.bytes() {
            m = m
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as i128))
                .ok_or(ParseDecimalError::Overflow)?;
        }
        m = m.checked_mul(SCALE).ok_or(ParseDecimalError::Overflow)?;
        let mut frac: i128 = 0;
        for b in frac_part.bytes() {
            frac = frac * 10 + (b - b'0') as i128;
        }
        frac *= 10i128.pow(SCALE_DIGITS - frac_part.len() as u32);
        m = m.checked_add(frac).ok_or(ParseDecimalError::Overflow)?;
        Ok(Decimal(if negative { -m } else { m }))
    }
}

/// Canonical rendering: no exponent, trailing fractional zeros trimmed.
/// `Display` output always parses back to the same mantissa.
impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u128;
        let frac = abs % SCALE as u128;
        let mut buf = [0u8; 18];
        let mut x = frac;
        for slot in buf.iter_mut().rev() {
            *slot = b'0' + (x % 10) as u8;
            x /= 10;
        }
        let mut end = buf.len();
        while end > 0 && buf[end - 1] == b'0' {
            end -= 1;
        }
        let sign = if neg { "-" } else { "" };
        if end == 0 {
            write!(f, "{sign}{int}")
        } else {
            // buf holds ASCII digits only.
            let digits = core::str::from_utf8(&buf[..end]).map_err(|_| fmt::Error)?;
            write!(f, "{sign}{int}.{digits}")
        }
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({self})")
    }
}
