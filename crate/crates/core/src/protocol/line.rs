use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;

use super::{ObisCode, ProtocolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Kwh,
    Kvarh,
    None,
}

impl Unit {
    pub fn symbol(&self) -> &'static str {
        match self {
            Unit::Kwh => "kWh",
            Unit::Kvarh => "kvarh",
            Unit::None => "",
        }
    }

    fn from_symbol(s: &str) -> Option<Unit> {
        match s {
            "kWh" => Some(Unit::Kwh),
            "kvarh" => Some(Unit::Kvarh),
            _ => None,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// One `ADDRESS(VALUE*UNIT)` data line. The value is kept as the exact text
/// seen on the wire; numeric conversion happens in [`DataLine::decimal_value`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataLine {
    pub address: ObisCode,
    pub value: String,
    pub unit: Unit,
}

fn is_value_byte(b: u8) -> bool {
    (0x20..=0x7e).contains(&b) && !matches!(b, b'(' | b')' | b'*')
}

impl DataLine {
    pub fn new(address: ObisCode, value: impl Into<String>, unit: Unit) -> Self {
        Self {
            address,
            value: value.into(),
            unit,
        }
    }

    /// A positive active energy line with the meter's fixed-width value text.
    pub fn energy(milli_kwh: u64) -> Self {
        Self::new(
            ObisCode::POSITIVE_ACTIVE,
            format_register_value(milli_kwh),
            Unit::Kwh,
        )
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.value.bytes().all(is_value_byte) {
            Ok(())
        } else {
            Err(ProtocolError::InvalidValue {
                value: self.value.clone(),
            })
        }
    }

    /// Appends the wire form, including the trailing CR LF.
    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<(), ProtocolError> {
        self.validate()?;
        out.extend_from_slice(self.address.to_string().as_bytes());
        out.push(b'(');
        out.extend_from_slice(self.value.as_bytes());
        if self.unit != Unit::None {
            out.push(b'*');
            out.extend_from_slice(self.unit.symbol().as_bytes());
        }
        out.extend_from_slice(b")\r\n");
        Ok(())
    }

    /// Parses one line without its CR LF terminator.
    pub(crate) fn parse(text: &[u8]) -> Option<DataLine> {
        let text = std::str::from_utf8(text).ok()?;
        let open = text.find('(')?;
        let address: ObisCode = text[..open].parse().ok()?;
        let inner = text[open + 1..].strip_suffix(')')?;
        let (value, unit) = match inner.split_once('*') {
            Some((value, symbol)) => (value, Unit::from_symbol(symbol)?),
            None => (inner, Unit::None),
        };
        let line = DataLine::new(address, value, unit);
        line.validate().ok()?;
        Some(line)
    }

    /// The value as an exact decimal. Only plain `digits[.digits]` text is accepted.
    pub fn decimal_value(&self) -> Result<Decimal, ProtocolError> {
        let malformed = || ProtocolError::MalformedValue {
            value: self.value.clone(),
        };
        let (int, frac) = match self.value.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (self.value.as_str(), None),
        };
        let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if !digits(int) || !frac.is_none_or(digits) {
            return Err(malformed());
        }
        Decimal::from_str(&self.value).map_err(|_| malformed())
    }
}

/// Register width on the wire: six integer digits, three decimals.
pub const REGISTER_MODULUS_MILLI: u64 = 1_000_000_000;

/// Renders a register count (0.001 kWh units) as `NNNNNN.NNN`, wrapping at
/// the register modulus.
pub fn format_register_value(milli_kwh: u64) -> String {
    let wrapped = milli_kwh % REGISTER_MODULUS_MILLI;
    format!("{:06}.{:03}", wrapped / 1000, wrapped % 1000)
}
