//! Physical quantities in config files.
//!
//! A quantity is either a bare number in SI units or a string `"<number> <unit>"`,
//! e.g. `"0.717 cm/s"` or `"20 µm"`. Quantities serialize back as bare SI numbers.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

pub trait Dimension {
    const NAME: &'static str;
    /// Accepted unit symbols and their SI factors.
    const UNITS: &'static [(&'static str, f64)];
}

macro_rules! dimension {
    ($ty:ident, $name:literal, [$(($sym:literal, $f:expr)),* $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $ty;
        impl Dimension for $ty {
            const NAME: &'static str = $name;
            const UNITS: &'static [(&'static str, f64)] = &[$(($sym, $f)),*];
        }
    };
}

dimension!(Length, "length", [
    ("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6), ("µm", 1e-6), ("μm", 1e-6), ("nm", 1e-9),
]);
dimension!(Time, "time", [
    ("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("μs", 1e-6), ("ns", 1e-9),
]);
dimension!(Velocity, "velocity", [
    ("m/s", 1.0), ("cm/s", 1e-2), ("mm/s", 1e-3), ("um/s", 1e-6), ("µm/s", 1e-6), ("μm/s", 1e-6),
]);
dimension!(Rate, "rate", [
    ("1/s", 1.0), ("/s", 1.0), ("s^-1", 1.0), ("rad/s", 1.0),
    ("1/ms", 1e3), ("1/us", 1e6), ("1/µs", 1e6), ("1/μs", 1e6), ("1/ns", 1e9),
]);
dimension!(Mass, "mass", [
    ("kg", 1.0), ("u", 1.660_539_066_60e-27), ("amu", 1.660_539_066_60e-27),
]);
dimension!(Coupling, "coupling", [("s^-1/2", 1.0), ("1/sqrt(s)", 1.0)]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    si: f64,
    _dim: PhantomData<D>,
}

impl<D: Dimension> Quantity<D> {
    pub const fn si(value: f64) -> Self {
        Self {
            si: value,
            _dim: PhantomData,
        }
    }

    pub fn value(&self) -> f64 {
        self.si
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let split = text
            .char_indices()
            .find(|&(_, c)| !(c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E')))
            .map_or(text.len(), |(i, _)| i);
        let (num, unit) = text.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("cannot read a number from {text:?}"))?;
        let unit = unit.trim();
        if unit.is_empty() {
            return Ok(Self::si(value));
        }
        D::UNITS
            .iter()
            .find(|(sym, _)| *sym == unit)
            .map(|&(_, f)| Self::si(value * f))
            .ok_or_else(|| {
                let known: Vec<&str> = D::UNITS.iter().map(|(s, _)| *s).collect();
                format!("unknown {} unit {unit:?} (expected one of {})", D::NAME, known.join(", "))
            })
    }
}

impl<D> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.si)
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        struct Visitor<D>(PhantomData<D>);
        impl<D: Dimension> de::Visitor<'_> for Visitor<D> {
            type Value = Quantity<D>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a {} as an SI number or a \"<number> <unit>\" string", D::NAME)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(Quantity::si(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(Quantity::si(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(Quantity::si(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Quantity::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(Visitor(PhantomData))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_convert_to_si() {
        assert_eq!(Quantity::<Velocity>::parse("0.717 cm/s").unwrap().value(), 0.717e-2);
        assert_eq!(Quantity::<Length>::parse("20µm").unwrap().value(), 20.0 * 1e-6);
        assert_eq!(Quantity::<Length>::parse("-64 um").unwrap().value(), -64.0 * 1e-6);
        assert_eq!(Quantity::<Rate>::parse("2.3895e3 1/s").unwrap().value(), 2.3895e3);
        assert_eq!(Quantity::<Time>::parse("1e-7").unwrap().value(), 1e-7);
    }

    #[test]
    fn wrong_dimension_is_rejected_with_the_unit_list() {
        let err = Quantity::<Length>::parse("3 ms").unwrap_err();
        assert!(err.contains("unknown length unit") && err.contains("nm"), "{err}");
        assert!(Quantity::<Time>::parse("fast").is_err());
    }
}
