//! A mode-C style subset of the IEC 62056-21 optical readout exchange:
//! sign-on request, identification message and a single data readout block.
//!
//! Wire grammar (see `docs/readout.ebnf`):
//!
//! ```text
//! request        = "/?!" CR LF
//! identification = "/" XXX Z ident CR LF
//! readout        = STX { line } "!" CR LF ETX BCC
//! line           = obis "(" value [ "*" unit ] ")" CR LF
//! ```

mod frame;
mod line;
mod obis;

use thiserror::Error;

pub use frame::{compute_bcc, encode_readout, parse_readout, ReadoutFrame, END_OF_DATA, ETX, STX};
pub use line::{format_register_value, DataLine, Unit, REGISTER_MODULUS_MILLI};
pub use obis::ObisCode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid OBIS code {0:?}")]
    InvalidObis(String),
    #[error("value {value:?} contains a reserved or non-printable character")]
    InvalidValue { value: String },
    #[error("empty block check payload")]
    EmptyPayload,
    #[error("frame does not start with STX")]
    MissingStx,
    #[error("no ETX after STX")]
    MissingEtx,
    #[error("frame ends before the BCC byte")]
    MissingBcc,
    #[error("block check mismatch: expected {expected:#04x}, found {found:#04x}")]
    ChecksumMismatch { expected: u8, found: u8 },
    #[error("malformed data line {index}")]
    MalformedLine { index: usize },
    #[error("{count} trailing byte(s) after BCC")]
    TrailingBytes { count: usize },
    #[error("register value {value:?} is not a decimal number")]
    MalformedValue { value: String },
    #[error("invalid identification message: {0}")]
    InvalidIdentification(String),
    #[error("not a sign-on request")]
    NotARequest,
}

const REQUEST: &[u8; 5] = b"/?!\r\n";

/// The sign-on request `/?!` CR LF.
pub fn encode_request() -> [u8; 5] {
    *REQUEST
}

pub fn parse_request(bytes: &[u8]) -> Result<(), ProtocolError> {
    if bytes == REQUEST {
        Ok(())
    } else {
        Err(ProtocolError::NotARequest)
    }
}

/// Meter reply to the sign-on request: `/MMMZIdent` CR LF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentificationMessage {
    pub manufacturer: String,
    pub baud_id: char,
    pub identifier: String,
}

impl IdentificationMessage {
    pub const MAX_IDENTIFIER_LEN: usize = 16;

    fn validate(&self) -> Result<(), ProtocolError> {
        let invalid = |why: &str| Err(ProtocolError::InvalidIdentification(why.to_string()));
        if self.manufacturer.len() != 3
            || !self.manufacturer.bytes().all(|b| b.is_ascii_uppercase())
        {
            return invalid("manufacturer must be three uppercase letters");
        }
        if !self.baud_id.is_ascii_graphic() || matches!(self.baud_id, '/' | '!') {
            return invalid("baud rate identification must be one printable character");
        }
        let ident_ok = (1..=Self::MAX_IDENTIFIER_LEN).contains(&self.identifier.len())
            && self
                .identifier
                .bytes()
                .all(|b| (0x20..=0x7e).contains(&b) && b != b'/' && b != b'!');
        if !ident_ok {
            return invalid("identifier must be 1-16 printable characters");
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, ProtocolError> {
        self.validate()?;
        Ok(format!(
            "/{}{}{}\r\n",
            self.manufacturer, self.baud_id, self.identifier
        )
        .into_bytes())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let invalid = |why: &str| ProtocolError::InvalidIdentification(why.to_string());
        let text = std::str::from_utf8(bytes).map_err(|_| invalid("not ASCII"))?;
        let inner = text
            .strip_prefix('/')
            .and_then(|t| t.strip_suffix("\r\n"))
            .ok_or_else(|| invalid("expected /...CR LF"))?;
        if !inner.is_ascii() || inner.len() < 5 {
            return Err(invalid("too short"));
        }
        let msg = IdentificationMessage {
            manufacturer: inner[..3].to_string(),
            baud_id: inner.as_bytes()[3] as char,
            identifier: inner[4..].to_string(),
        };
        msg.validate()?;
        Ok(msg)
    }
}
