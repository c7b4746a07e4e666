use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ProtocolError;

/// Register identifier in reduced `C.D.E` form (channel, quantity, tariff).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObisCode {
    channel: u8,
    quantity: u8,
    tariff: u8,
}

impl ObisCode {
    /// Cumulative positive active energy (import).
    pub const POSITIVE_ACTIVE: ObisCode = ObisCode::from_parts(1, 8, 0);
    /// Cumulative negative active energy (export).
    pub const NEGATIVE_ACTIVE: ObisCode = ObisCode::from_parts(2, 8, 0);
    pub const POSITIVE_REACTIVE: ObisCode = ObisCode::from_parts(3, 8, 0);
    pub const NEGATIVE_REACTIVE: ObisCode = ObisCode::from_parts(4, 8, 0);
    /// Absolute active energy, the only register some meters expose.
    pub const ABSOLUTE_ACTIVE: ObisCode = ObisCode::from_parts(15, 8, 0);

    const MAX_COMPONENT: u8 = 99;

    const fn from_parts(channel: u8, quantity: u8, tariff: u8) -> Self {
        Self {
            channel,
            quantity,
            tariff,
        }
    }

    pub fn new(channel: u8, quantity: u8, tariff: u8) -> Result<Self, ProtocolError> {
        for c in [channel, quantity, tariff] {
            if c > Self::MAX_COMPONENT {
                return Err(ProtocolError::InvalidObis(format!(
                    "{channel}.{quantity}.{tariff}"
                )));
            }
        }
        Ok(Self::from_parts(channel, quantity, tariff))
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn quantity(&self) -> u8 {
        self.quantity
    }

    pub fn tariff(&self) -> u8 {
        self.tariff
    }
}

impl fmt::Display for ObisCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.channel, self.quantity, self.tariff)
    }
}

// Canonical decimal only ("01" is rejected) so text and code are in bijection.
fn parse_component(s: &str) -> Option<u8> {
    let bytes = s.as_bytes();
    if bytes.is_empty() || bytes.len() > 2 || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    if bytes.len() == 2 && bytes[0] == b'0' {
        return None;
    }
    s.parse().ok()
}

impl FromStr for ObisCode {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || ProtocolError::InvalidObis(s.to_string());
        let mut parts = s.split('.');
        let mut next = || parts.next().and_then(parse_component).ok_or_else(invalid);
        let code = ObisCode::new(next()?, next()?, next()?)?;
        if parts.next().is_some() {
            return Err(invalid());
        }
        Ok(code)
    }
}

impl Serialize for ObisCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObisCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
