//! 256-bit storage words and the byte-range helpers used for slot packing.

use std::fmt;

pub use ethnum::{I256, U256};

/// Big-endian 32-byte encoding of a word.
pub fn pad32(word: U256) -> [u8; 32] {
    word.to_be_bytes()
}

pub fn from_be_slice(bytes: &[u8]) -> U256 {
    let mut buf = [0u8; 32];
    let n = bytes.len().min(32);
    buf[32 - n..].copy_from_slice(&bytes[bytes.len() - n..]);
    U256::from_be_bytes(buf)
}

/// Mask covering `width` low-order bytes.
pub fn byte_mask(width: u8) -> U256 {
    debug_assert!((1..=32).contains(&width));
    if width >= 32 {
        U256::MAX
    } else {
        (U256::ONE << (u32::from(width) * 8)) - U256::ONE
    }
}

/// Reads `width` bytes starting `offset` bytes above the least significant byte.
pub fn extract(word: U256, offset: u8, width: u8) -> U256 {
    (word >> (u32::from(offset) * 8)) & byte_mask(width)
}

/// Replaces the byte range with `value`. `value` must already fit the width.
pub fn insert(word: U256, offset: u8, width: u8, value: U256) -> U256 {
    let shift = u32::from(offset) * 8;
    let mask = byte_mask(width) << shift;
    (word & !mask) | ((value & byte_mask(width)) << shift)
}

pub fn fits_width(value: U256, width: u8) -> bool {
    width >= 32 || value <= byte_mask(width)
}

/// `0x`-prefixed lowercase hex with no leading zeros.
/// Serializes a word as 0x-hex; for use with `serialize_with`.
pub fn serialize_hex<S: serde::Serializer>(word: &U256, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&to_hex(*word))
}

pub fn to_hex(word: U256) -> String {
    format!("{word:#x}")
}

pub fn parse_hex(text: &str) -> Option<U256> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))?;
    if digits.is_empty() || digits.len() > 64 {
        return None;
    }
    U256::from_str_radix(digits, 16).ok()
}

/// Parses decimal or `0x` hex text.
pub fn parse_word(text: &str) -> Option<U256> {
    if text.starts_with("0x") || text.starts_with("0X") {
        parse_hex(text)
    } else if !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()) {
        U256::from_str_radix(text, 10).ok()
    } else {
        None
    }
}

/// Reinterprets a word as two's-complement.
pub fn as_signed(word: U256) -> I256 {
    word.as_i256()
}

pub fn from_signed(value: I256) -> U256 {
    value.as_u256()
}

/// A signed quantity whose magnitude may use all 256 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct SignedWord {
    pub negative: bool,
    pub magnitude: U256,
}

impl SignedWord {
    pub const ZERO: SignedWord = SignedWord {
        negative: false,
        magnitude: U256::ZERO,
    };

    /// `to - from` over unsigned words.
    pub fn diff_unsigned(from: U256, to: U256) -> Self {
        if to >= from {
            SignedWord {
                negative: false,
                magnitude: to - from,
            }
        } else {
            SignedWord {
                negative: true,
                magnitude: from - to,
            }
        }
    }

    /// `to - from` where both are two's-complement int256.
    pub fn diff_signed(from: I256, to: I256) -> Self {
        // Computed on the 257-bit range by splitting on sign.
        if to >= from {
            SignedWord {
                negative: false,
                magnitude: to.as_u256().wrapping_sub(from.as_u256()),
            }
        } else {
            SignedWord {
                negative: true,
                magnitude: from.as_u256().wrapping_sub(to.as_u256()),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude == U256::ZERO
    }

    /// Sum of two signed quantities; `None` if the magnitude exceeds 256 bits.
    pub fn checked_add(self, other: SignedWord) -> Option<SignedWord> {
        if self.negative == other.negative {
            let magnitude = self.magnitude.checked_add(other.magnitude)?;
            return Some(SignedWord {
                negative: self.negative && magnitude != U256::ZERO,
                magnitude,
            });
        }
        let (pos, neg) = if self.negative {
            (other.magnitude, self.magnitude)
        } else {
            (self.magnitude, other.magnitude)
        };
        Some(SignedWord::diff_unsigned(neg, pos))
    }

    pub fn to_hex(&self) -> String {
        if self.negative && !self.is_zero() {
            format!("-{}", to_hex(self.magnitude))
        } else {
            to_hex(self.magnitude)
        }
    }
}

impl fmt::Display for SignedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "0")
        } else if self.negative {
            write!(f, "-{}", self.magnitude)
        } else {
            write!(f, "+{}", self.magnitude)
        }
    }
}

/// A 20-byte account address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_word(self) -> U256 {
        from_be_slice(&self.0)
    }

    /// Low 20 bytes of `word`; `None` if any higher byte is set.
    pub fn from_word(word: U256) -> Option<Self> {
        if word >> 160u32 != U256::ZERO {
            return None;
        }
        let bytes = word.to_be_bytes();
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes[12..]);
        Some(Address(out))
    }

    /// Deterministic address for a test alias: low 20 bytes of keccak256("kaya:" ‖ alias).
    pub fn for_alias(alias: &str) -> Self {
        let mut input = b"kaya:".to_vec();
        input.extend_from_slice(alias.as_bytes());
        let digest = crate::keccak::keccak256(&input);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[12..]);
        Address(out)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_offsets_count_from_low_order_byte() {
        let w = insert(U256::ZERO, 0, 16, U256::new(5));
        let w = insert(w, 16, 16, U256::new(3));
        assert_eq!(extract(w, 0, 16), U256::new(5));
        assert_eq!(extract(w, 16, 16), U256::new(3));
        assert_eq!(w, (U256::new(3) << 128u32) | U256::new(5));
    }

    #[test]
    fn full_width_insert_replaces_word() {
        assert_eq!(insert(U256::MAX, 0, 32, U256::new(7)), U256::new(7));
        assert_eq!(extract(U256::MAX, 0, 32), U256::MAX);
    }

    #[test]
    fn hex_round_trip() {
        assert_eq!(to_hex(U256::ZERO), "0x0");
        assert_eq!(to_hex(U256::new(255)), "0xff");
        assert_eq!(parse_hex("0xff"), Some(U256::new(255)));
        assert_eq!(parse_word("1000"), Some(U256::new(1000)));
        assert_eq!(parse_word("0x"), None);
        assert_eq!(parse_word("12a"), None);
    }

    #[test]
    fn signed_diff_covers_full_range() {
        let d = SignedWord::diff_signed(I256::MIN, I256::MAX);
        assert!(!d.negative);
        assert_eq!(d.magnitude, U256::MAX);
        let d = SignedWord::diff_unsigned(U256::new(100), U256::new(40));
        assert_eq!(d.to_string(), "-60");
        assert_eq!(d.to_hex(), "-0x3c");
    }

    #[test]
    fn address_word_conversion() {
        let a = Address::for_alias("alice");
        assert_eq!(Address::from_word(a.to_word()), Some(a));
        assert_eq!(Address::from_word(U256::ONE << 160u32), None);
    }
}
