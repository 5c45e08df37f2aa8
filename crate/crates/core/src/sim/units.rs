//! Quantities with unit suffixes, as written in scenario files.
//!
//! Every physical value in a config is a string such as `"10 MHz"`,
//! `"-174 dBm/Hz"` or `"0.5 W"`; internally everything is SI. The
//! `serde(with = ...)` helpers below parse on the way in and write the SI
//! value back with its base unit on the way out.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Power,
    Energy,
    Frequency,
    Time,
    Length,
    /// Power spectral density (W/Hz).
    Density,
    /// Dimensionless; written plain or in dB.
    Ratio,
}

impl Dim {
    pub fn base_unit(self) -> &'static str {
        match self {
            Dim::Power => "W",
            Dim::Energy => "J",
            Dim::Frequency => "Hz",
            Dim::Time => "s",
            Dim::Length => "m",
            Dim::Density => "W/Hz",
            Dim::Ratio => "",
        }
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Parses `"<number> <unit>"` (space optional) into SI and its dimension. A
/// bare number is a ratio.
pub fn parse_quantity(s: &str) -> Result<(f64, Dim)> {
    let s = s.trim();
    let split = s
        .char_indices()
        .find(|&(i, c)| c.is_alphabetic() && !(c == 'e' || c == 'E') || (c == 'e' || c == 'E') && !exponent_at(s, i))
        .map_or(s.len(), |(i, _)| i);
    let (num, unit) = s.split_at(split);
    let x: f64 = num.trim().parse().map_err(|_| Error::Config(format!("cannot read a number from {s:?}")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{s:?} is not finite")));
    }
    let (v, dim) = match unit.trim() {
        "" => (x, Dim::Ratio),
        "dB" => (db(x), Dim::Ratio),
        "W" => (x, Dim::Power),
        "mW" => (x * 1e-3, Dim::Power),
        "kW" => (x * 1e3, Dim::Power),
        "dBm" => (db(x) * 1e-3, Dim::Power),
        "dBW" => (db(x), Dim::Power),
        "J" => (x, Dim::Energy),
        "mJ" => (x * 1e-3, Dim::Energy),
        "kJ" => (x * 1e3, Dim::Energy),
        "Hz" => (x, Dim::Frequency),
        "kHz" => (x * 1e3, Dim::Frequency),
        "MHz" => (x * 1e6, Dim::Frequency),
        "GHz" => (x * 1e9, Dim::Frequency),
        "s" => (x, Dim::Time),
        "ms" => (x * 1e-3, Dim::Time),
        "us" => (x * 1e-6, Dim::Time),
        "m" => (x, Dim::Length),
        "km" => (x * 1e3, Dim::Length),
        "W/Hz" => (x, Dim::Density),
        "dBm/Hz" => (db(x) * 1e-3, Dim::Density),
        "dBW/Hz" => (db(x), Dim::Density),
        other => return Err(Error::Config(format!("unknown unit {other:?} in {s:?}"))),
    };
    Ok((v, dim))
}

/// `e` or `E` at byte `i` continues a number like `1e-3` only when a digit
/// precedes it and a digit or sign follows.
fn exponent_at(s: &str, i: usize) -> bool {
    let b = s.as_bytes();
    let before = i > 0 && b[i - 1].is_ascii_digit() || i > 1 && b[i - 1] == b'.' && b[i - 2].is_ascii_digit();
    let after = b.get(i + 1).is_some_and(|c| c.is_ascii_digit() || *c == b'-' || *c == b'+');
    before && after
}

/// Parses `s` and insists on dimension `dim`.
pub fn parse_as(s: &str, dim: Dim) -> Result<f64> {
    let (v, got) = parse_quantity(s)?;
    if got != dim {
        let want = match dim {
            Dim::Ratio => "a plain number or dB".to_string(),
            d => format!("a value in {} (or a scaled unit)", d.base_unit()),
        };
        return Err(Error::Config(format!("{s:?} is {got:?}, expected {want}")));
    }
    Ok(v)
}

/// Writes an SI value with its base unit.
pub fn format_si(v: f64, dim: Dim) -> String {
    match dim {
        Dim::Ratio => format!("{v}"),
        d => format!("{v} {}", d.base_unit()),
    }
}

macro_rules! unit_serde {
    ($name:ident, $dim:expr) => {
        pub mod $name {
            use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

            use super::{format_si, parse_as};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&format_si(*v, $dim))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                let s = String::deserialize(d)?;
                parse_as(&s, $dim).map_err(D::Error::custom)
            }

            pub mod pair {
                use super::*;

                pub fn serialize<S: Serializer>(v: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
                    s.collect_seq(v.iter().map(|x| format_si(*x, $dim)))
                }

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 2], D::Error> {
                    let [a, b] = <[String; 2]>::deserialize(d)?;
                    Ok([parse_as(&a, $dim).map_err(D::Error::custom)?, parse_as(&b, $dim).map_err(D::Error::custom)?])
                }
            }

            pub mod pairs {
                use super::*;

                pub fn serialize<S: Serializer>(v: &Option<Vec<[f64; 2]>>, s: S) -> Result<S::Ok, S::Error> {
                    match v {
                        None => s.serialize_none(),
                        Some(v) => s.collect_seq(v.iter().map(|p| [format_si(p[0], $dim), format_si(p[1], $dim)])),
                    }
                }

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<[f64; 2]>>, D::Error> {
                    let raw = Option::<Vec<[String; 2]>>::deserialize(d)?;
                    raw.map(|v| {
                        v.into_iter()
                            .map(|[a, b]| Ok([parse_as(&a, $dim).map_err(D::Error::custom)?, parse_as(&b, $dim).map_err(D::Error::custom)?]))
                            .collect()
                    })
                    .transpose()
                }
            }
        }
    };
}

unit_serde!(watts, crate::sim::units::Dim::Power);
unit_serde!(joules, crate::sim::units::Dim::Energy);
unit_serde!(hertz, crate::sim::units::Dim::Frequency);
unit_serde!(seconds, crate::sim::units::Dim::Time);
unit_serde!(meters, crate::sim::units::Dim::Length);
unit_serde!(watts_per_hz, crate::sim::units::Dim::Density);
unit_serde!(ratio, crate::sim::units::Dim::Ratio);
