//! Byte-level helpers shared by the binary encodings, plus the hex-armored
//! `FIELD: hex` text form used for fixtures.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("unexpected magic or identifier")]
    BadMagic,
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("length {0} exceeds limit")]
    TooLong(usize),
}

/// Cursor over an input slice.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

/// Renders `(field, bytes)` pairs as `FIELD: hex` lines.
pub fn armor(fields: &[(&str, &[u8])]) -> String {
    let mut out = String::new();
    for (name, bytes) in fields {
        out.push_str(name);
        out.push_str(": ");
        for b in bytes.iter() {
            let _ = write!(out, "{b:02x}");
        }
        out.push('\n');
    }
    out
}

/// Parses `FIELD: hex` lines; blank lines and `#` comments are skipped.
pub fn dearmor(text: &str) -> Result<Vec<(String, Vec<u8>)>, DecodeError> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, value) = line
            .split_once(':')
            .ok_or(DecodeError::Invalid("missing ':' separator"))?;
        out.push((String::from(name.trim()), decode_hex(value.trim())?));
    }
    Ok(out)
}

pub fn decode_hex(s: &str) -> Result<Vec<u8>, DecodeError> {
    if !s.len().is_multiple_of(2) {
        return Err(DecodeError::Invalid("odd-length hex"));
    }
    s.as_bytes()
        .chunks(2)
        .map(|pair| {
            let hi = hex_digit(pair[0])?;
            let lo = hex_digit(pair[1])?;
            Ok((hi << 4) | lo)
        })
        .collect()
}

fn hex_digit(c: u8) -> Result<u8, DecodeError> {
    match c {
        b'0'..=b'9' => Ok(c - b'0'),
        b'a'..=b'f' => Ok(c - b'a' + 10),
        b'A'..=b'F' => Ok(c - b'A' + 10),
        _ => Err(DecodeError::Invalid("non-hex character")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reader_detects_truncation_and_trailing() {
        let mut r = Reader::new(&[0, 1, 2]);
        assert_eq!(r.u16().unwrap(), 1);
        assert_eq!(r.u16(), Err(DecodeError::Truncated));
        let r = Reader::new(&[0]);
        assert_eq!(r.finish(), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn dearmor_skips_comments() {
        let fields = dearmor("# fixture\nCHUNK: 00ff\n\nCOUNTER:0000000000000001\n").unwrap();
        assert_eq!(fields[0], ("CHUNK".into(), alloc::vec![0x00, 0xff]));
        assert_eq!(fields[1].1.len(), 8);
        assert!(dearmor("BAD 00").is_err());
        assert!(dearmor("BAD: 0g").is_err());
    }

    proptest! {
        #[test]
        fn armor_round_trip(a in proptest::collection::vec(any::<u8>(), 0..40), b in proptest::collection::vec(any::<u8>(), 0..40)) {
            let text = armor(&[("A", &a), ("B", &b)]);
            let back = dearmor(&text).unwrap();
            prop_assert_eq!(&back[0].1, &a);
            prop_assert_eq!(&back[1].1, &b);
        }
    }
}
