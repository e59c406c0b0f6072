//! Exact rational helpers: parsing from text, conversion to `f64`, and the
//! numerator/denominator pair encoding used in JSON output.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parses `"3"`, `"-2/3"`, `"0.01"` or `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Q> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::input("empty rational literal"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = BigInt::from_str(num.trim())
            .map_err(|_| Error::input(format!("bad numerator in `{s}`")))?;
        let d = BigInt::from_str(den.trim())
            .map_err(|_| Error::input(format!("bad denominator in `{s}`")))?;
        if d.is_zero() {
            return Err(Error::input(format!("zero denominator in `{s}`")));
        }
        return Ok(Q::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Result<Q> {
    let bad = || Error::input(format!("not a rational literal: `{s}`"));
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut n = BigInt::from_str(if all.is_empty() { "0" } else { &all }).map_err(|_| bad())?;
    if neg {
        n = -n;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Q::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Exact rational for the shortest decimal representation of `x`.
pub fn from_f64_decimal(x: f64) -> Result<Q> {
    if !x.is_finite() {
        return Err(Error::input(format!("non-finite number {x}")));
    }
    parse_decimal(&format!("{x:e}"))
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Human-readable form: `3`, `-2/3`.
pub fn display(x: &Q) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Serializes as `[numerator, denominator]`. Components that fit in `i64`
/// are JSON integers, larger ones are decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RatioPair(pub Q);

impl Serialize for RatioPair {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut tup = ser.serialize_tuple(2)?;
        for part in [self.0.numer(), self.0.denom()] {
            match part.to_i64() {
                Some(v) => tup.serialize_element(&v)?,
                None => tup.serialize_element(&part.to_string())?,
            }
        }
        tup.end()
    }
}

impl<'de> Deserialize<'de> for RatioPair {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Part {
            Int(i64),
            Text(String),
        }
        let (n, d): (Part, Part) = Deserialize::deserialize(de)?;
        let to_big = |p: Part| -> std::result::Result<BigInt, D::Error> {
            match p {
                Part::Int(v) => Ok(BigInt::from(v)),
                Part::Text(s) => BigInt::from_str(&s).map_err(de::Error::custom),
            }
        };
        let (n, d) = (to_big(n)?, to_big(d)?);
        if d.is_zero() {
            return Err(de::Error::custom("zero denominator"));
        }
        Ok(RatioPair(Q::new(n, d)))
    }
}

/// Config-file number: accepts a JSON number or a rational string such as `"2/3"`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exact(pub Q);

impl Exact {
    pub fn to_f64(&self) -> f64 {
        to_f64(&self.0)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&display(&self.0))
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&display(&self.0))
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Exact;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a rational string like \"2/3\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exact, E> {
                Ok(Exact(qi(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exact, E> {
                Ok(Exact(Q::from_integer(BigInt::from(v))))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exact, E> {
                from_f64_decimal(v).map(Exact).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exact, E> {
                parse_rational(v).map(Exact).map_err(E::custom)
            }
        }
        de.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("2/3").unwrap(), q(2, 3));
        assert_eq!(parse_rational("-3/6").unwrap(), q(-1, 2));
        assert_eq!(parse_rational("0.01").unwrap(), q(1, 100));
        assert_eq!(parse_rational("1.5e2").unwrap(), qi(150));
        assert_eq!(parse_rational("-1e-3").unwrap(), q(-1, 1000));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn float_literals_round_trip_through_shortest_decimal() {
        assert_eq!(from_f64_decimal(0.1).unwrap(), q(1, 10));
        assert_eq!(from_f64_decimal(-2.5).unwrap(), q(-5, 2));
        assert!(from_f64_decimal(f64::NAN).is_err());
    }

    #[test]
    fn exact_accepts_numbers_and_strings() {
        let v: Vec<Exact> = serde_json::from_str(r#"[3, 0.25, "2/3", "-1"]"#).unwrap();
        assert_eq!(v[0].0, qi(3));
        assert_eq!(v[1].0, q(1, 4));
        assert_eq!(v[2].0, q(2, 3));
        assert_eq!(v[3].0, qi(-1));
    }

    #[test]
    fn ratio_pair_json() {
        let s = serde_json::to_string(&RatioPair(q(-3, 2))).unwrap();
        assert_eq!(s, "[-3,2]");
        let back: RatioPair = serde_json::from_str(&s).unwrap();
        assert_eq!(back.0, q(-3, 2));
    }
}
