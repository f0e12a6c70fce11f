//! Unit-tagged wrappers around [`Decimal`].
//!
//! `Usd`, `Tokens` and `Price` (USD per token) only combine in ways that
//! keep the units straight: tokens times price is USD, USD over price is
//! tokens, USD over tokens is a price.

use core::fmt;

use crate::decimal::{Decimal, MathError, Rounding};

macro_rules! quantity {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub Decimal);

        impl $name {
            pub const ZERO: $name = $name(Decimal::ZERO);

            pub fn new(d: Decimal) -> Self {
                $name(d)
            }

            pub fn from_int(n: i64) -> Self {
                $name(Decimal::from_int(n))
            }

            pub fn get(self) -> Decimal {
                self.0
            }

            pub fn is_zero(self) -> bool {
                self.0.is_zero()
            }

            pub fn is_positive(self) -> bool {
                self.0.is_positive()
            }

            pub fn is_negative(self) -> bool {
                self.0.is_negative()
            }

            pub fn add(self, rhs: Self) -> Result<Self, MathError> {
                self.0.add(rhs.0).map($name)
            }

            pub fn sub(self, rhs: Self) -> Result<Self, MathError> {
                self.0.sub(rhs.0).map($name)
            }

            pub fn abs(self) -> Result<Self, MathError> {
                self.0.abs().map($name)
            }

            pub fn neg(self) -> Result<Self, MathError> {
                self.0.neg().map($name)
            }

            pub fn min(self, rhs: Self) -> Self {
                $name(self.0.min(rhs.0))
            }

            pub fn max(self, rhs: Self) -> Self {
                $name(self.0.max(rhs.0))
            }

            pub fn clamp_non_negative(self) -> Self {
                $name(self.0.clamp_non_negative())
            }

            /// Scale by a dimensionless factor (a percentage or ratio).
            pub fn scale(self, factor: Decimal, r: Rounding) -> Result<Self, MathError> {
                self.0.mul(factor, r).map($name)
            }

            /// `self * num / den` for a dimensionless fraction.
            pub fn scale_frac(self, num: Decimal, den: Decimal, r: Rounding) -> Result<Self, MathError> {
                self.0.mul_div(num, den, r).map($name)
            }

            pub fn sum<I: IntoIterator<Item = $name>>(iter: I) -> Result<Self, MathError> {
                Decimal::checked_sum(iter.into_iter().map(|x| x.0)).map($name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0, f)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.0)
            }
        }
    };
}

quantity!(
    /// A USD (stable-coin) amount. Signed where it denotes a net flow.
    Usd
);
quantity!(
    /// A quantity of fund tokens.
    Tokens
);
quantity!(
    /// USD per fund token.
    Price
);

impl Tokens {
    /// USD value of these tokens at `price`.
    pub fn value_at(self, price: Price, r: Rounding) -> Result<Usd, MathError> {
        self.0.mul(price.0, r).map(Usd)
    }
}

impl Usd {
    /// Tokens this amount buys at `price`.
    pub fn tokens_at(self, price: Price, r: Rounding) -> Result<Tokens, MathError> {
        self.0.div(price.0, r).map(Tokens)
    }

    /// Price implied by spreading this amount over `tokens`.
    pub fn per(self, tokens: Tokens, r: Rounding) -> Result<Price, MathError> {
        self.0.div(tokens.0, r).map(Price)
    }

    /// Dimensionless ratio `self / rhs`.
    pub fn ratio(self, rhs: Usd, r: Rounding) -> Result<Decimal, MathError> {
        self.0.div(rhs.0, r)
    }
}

impl Price {
    pub fn sub_clamped(self, rhs: Price) -> Result<Price, MathError> {
        self.sub(rhs).map(Price::clamp_non_negative)
    }
}
