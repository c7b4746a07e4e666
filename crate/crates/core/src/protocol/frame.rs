use rust_decimal::Decimal;

use super::{DataLine, ObisCode, ProtocolError};

pub const STX: u8 = 0x02;
pub const ETX: u8 = 0x03;
/// Closes the data block, between the last line and ETX.
pub const END_OF_DATA: &[u8] = b"!\r\n";

/// A validated data readout block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadoutFrame {
    pub lines: Vec<DataLine>,
    pub bcc: u8,
}

impl ReadoutFrame {
    pub fn new(lines: Vec<DataLine>) -> Result<Self, ProtocolError> {
        let bytes = encode_readout(&lines)?;
        Ok(Self {
            lines,
            bcc: bytes[bytes.len() - 1],
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ProtocolError> {
        encode_readout(&self.lines)
    }

    /// Value of the first line carrying `code`, or `None` if the register is absent.
    pub fn extract_energy(&self, code: ObisCode) -> Result<Option<Decimal>, ProtocolError> {
        self.lines
            .iter()
            .find(|l| l.address == code)
            .map(DataLine::decimal_value)
            .transpose()
    }
}

/// XOR fold of a block check payload (the bytes after STX up to and including ETX).
pub fn compute_bcc(payload: &[u8]) -> Result<u8, ProtocolError> {
    if payload.is_empty() {
        return Err(ProtocolError::EmptyPayload);
    }
    Ok(payload.iter().fold(0, |acc, b| acc ^ b))
}

fn xor(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_readout(lines: &[DataLine]) -> Result<Vec<u8>, ProtocolError> {
    let mut out = vec![STX];
    for line in lines {
        line.write_to(&mut out)?;
    }
    out.extend_from_slice(END_OF_DATA);
    out.push(ETX);
    out.push(xor(&out[1..]));
    Ok(out)
}

/// Parses `STX body ETX BCC`.
///
/// A frame is located by the first ETX. When bytes follow the BCC, they are
/// reported as trailing only if that first block is itself complete and
/// checks out; otherwise the input is treated as a single frame whose body
/// contains a stray ETX and is checked as such. This keeps every single-byte
/// body corruption a checksum error, even one that produces an ETX.
pub fn parse_readout(bytes: &[u8]) -> Result<ReadoutFrame, ProtocolError> {
    if bytes.first() != Some(&STX) {
        return Err(ProtocolError::MissingStx);
    }
    let etx = bytes[1..]
        .iter()
        .position(|&b| b == ETX)
        .map(|i| i + 1)
        .ok_or(ProtocolError::MissingEtx)?;
    let len = bytes.len();
    if etx + 1 >= len {
        return Err(ProtocolError::MissingBcc);
    }

    let expected = xor(&bytes[1..=etx]);
    let found = bytes[etx + 1];
    let checksum_error = |expected, found| ProtocolError::ChecksumMismatch { expected, found };

    if etx + 2 == len {
        if expected != found {
            return Err(checksum_error(expected, found));
        }
        return parse_body(&bytes[1..etx], found);
    }

    let body = &bytes[1..etx];
    if expected == found && body.ends_with(END_OF_DATA) {
        return Err(ProtocolError::TrailingBytes {
            count: len - etx - 2,
        });
    }
    if bytes[len - 2] == ETX {
        let whole = xor(&bytes[1..len - 1]);
        if whole != bytes[len - 1] {
            return Err(checksum_error(whole, bytes[len - 1]));
        }
        return parse_body(&bytes[1..len - 2], whole);
    }
    if expected != found {
        return Err(checksum_error(expected, found));
    }
    Err(ProtocolError::TrailingBytes {
        count: len - etx - 2,
    })
}

fn parse_body(body: &[u8], bcc: u8) -> Result<ReadoutFrame, ProtocolError> {
    let mut lines = Vec::new();
    let Some(mut rest) = body.strip_suffix(END_OF_DATA) else {
        return Err(ProtocolError::MalformedLine {
            index: body.windows(2).filter(|w| w == b"\r\n").count(),
        });
    };
    while !rest.is_empty() {
        let index = lines.len();
        let end = rest
            .windows(2)
            .position(|w| w == b"\r\n")
            .ok_or(ProtocolError::MalformedLine { index })?;
        let line = DataLine::parse(&rest[..end]).ok_or(ProtocolError::MalformedLine { index })?;
        lines.push(line);
        rest = &rest[end + 2..];
    }
    Ok(ReadoutFrame { lines, bcc })
}
