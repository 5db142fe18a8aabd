//! Exact rational rates.
//!
//! Frame rates like 12.5 Hz must survive serialization and bitrate
//! arithmetic without rounding, so they are carried as reduced `u32/u32`
//! fractions rather than floats.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RateError {
    #[error("rate must be positive (got {num}/{den})")]
    NonPositive { num: u32, den: u32 },
    #[error("cannot parse rate from {0:?}")]
    Parse(String),
}

/// Positive rational number of events per second, stored reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rate {
    num: u32,
    den: u32,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rate {
    pub fn new(num: u32, den: u32) -> Result<Self, RateError> {
        if num == 0 || den == 0 {
            return Err(RateError::NonPositive { num, den });
        }
        let g = gcd(num as u64, den as u64) as u32;
        Ok(Rate {
            num: num / g,
            den: den / g,
        })
    }

    /// Whole-number rate, e.g. 25 Hz.
    pub fn from_hz(hz: u32) -> Self {
        Rate::new(hz, 1).expect("nonzero")
    }

    pub fn numerator(&self) -> u32 {
        self.num
    }

    pub fn denominator(&self) -> u32 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Seconds per event (1/rate) as a float.
    pub fn period_seconds(&self) -> f64 {
        self.den as f64 / self.num as f64
    }

    /// Multiply by an integer count, exactly: `self * count` as a reduced
    /// fraction `(num, den)` of u128s.
    pub fn mul_integer(&self, count: u64) -> (u128, u128) {
        let num = self.num as u128 * count as u128;
        let den = self.den as u128;
        let g = gcd128(num, den);
        (num / g, den / g)
    }

    /// Parse `"25"`, `"12.5"` or `"25/2"` into an exact rate.
    pub fn parse(s: &str) -> Result<Self, RateError> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num: u32 = n.trim().parse().map_err(|_| RateError::Parse(s.into()))?;
            let den: u32 = d.trim().parse().map_err(|_| RateError::Parse(s.into()))?;
            return Rate::new(num, den);
        }
        if let Some((whole, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(RateError::Parse(s.into()));
            }
            let scale = 10u32.pow(frac.len() as u32);
            let whole: u32 = if whole.is_empty() {
                0
            } else {
                whole.parse().map_err(|_| RateError::Parse(s.into()))?
            };
            let frac: u32 = frac.parse().map_err(|_| RateError::Parse(s.into()))?;
            let num = whole
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac))
                .ok_or_else(|| RateError::Parse(s.into()))?;
            return Rate::new(num, scale);
        }
        let num: u32 = s.parse().map_err(|_| RateError::Parse(s.into()))?;
        Rate::new(num, 1)
    }
}

impl fmt::Display for Rate {
    /// Prints an exact decimal when the reduced denominator is a product
    /// of 2s and 5s (`337.5`), otherwise a fraction (`50/3`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_exact(self.num as u128, self.den as u128, f)
    }
}

fn gcd128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Write `num/den` as an exact decimal if possible, else as a fraction.
pub(crate) fn format_exact(num: u128, den: u128, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let g = gcd128(num, den);
    let (num, den) = (num / g, den / g);
    let mut d = den;
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    if d != 1 {
        return write!(f, "{num}/{den}");
    }
    // Scale to a power of ten: num/den = (num * 2^a * 5^b) / 10^k
    let k = twos.max(fives);
    let scale = 2u128.pow(k - twos) * 5u128.pow(k - fives);
    let scaled = num * scale;
    let pow10 = 10u128.pow(k);
    let whole = scaled / pow10;
    let frac = scaled % pow10;
    if frac == 0 {
        write!(f, "{whole}")
    } else {
        let digits = format!("{frac:0width$}", width = k as usize);
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

/// Exact decimal/fraction display for an arbitrary u128 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio128 {
    pub num: u128,
    pub den: u128,
}

impl fmt::Display for Ratio128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_exact(self.num, self.den, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_on_construction() {
        let r = Rate::new(50, 4).unwrap();
        assert_eq!((r.numerator(), r.denominator()), (25, 2));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Rate::parse("25").unwrap(), Rate::from_hz(25));
        assert_eq!(Rate::parse("12.5").unwrap(), Rate::new(25, 2).unwrap());
        assert_eq!(Rate::parse("25/2").unwrap(), Rate::new(25, 2).unwrap());
        assert!(Rate::parse("0").is_err());
        assert!(Rate::parse("abc").is_err());
    }

    #[test]
    fn display_exact() {
        assert_eq!(Rate::new(25, 2).unwrap().to_string(), "12.5");
        assert_eq!(Rate::from_hz(25).to_string(), "25");
        assert_eq!(Rate::new(50, 3).unwrap().to_string(), "50/3");
    }
}
