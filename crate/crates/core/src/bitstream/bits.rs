//! MSB-first bit packing within bytes.

/// Accumulates bits most-significant-first, zero-padding the final byte.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    used: u32, // bits used in the last byte, 0..8
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `count` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, count: u32) {
        debug_assert!(count <= 64);
        debug_assert!(count == 64 || value < (1u64 << count).max(1));
        for i in (0..count).rev() {
            let bit = ((value >> i) & 1) as u8;
            if self.used == 0 {
                self.bytes.push(0);
            }
            let last = self.bytes.last_mut().unwrap();
            *last |= bit << (7 - self.used);
            self.used = (self.used + 1) % 8;
        }
    }

    pub fn bit_len(&self) -> u64 {
        if self.used == 0 {
            self.bytes.len() as u64 * 8
        } else {
            (self.bytes.len() as u64 - 1) * 8 + self.used as u64
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads bits most-significant-first from a byte slice.
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64, // bit position
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn read_bits(&mut self, count: u32) -> Option<u64> {
        if self.pos + count as u64 > self.bytes.len() as u64 * 8 {
            return None;
        }
        let mut value = 0u64;
        for _ in 0..count {
            let byte = self.bytes[(self.pos / 8) as usize];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            value = (value << 1) | bit as u64;
            self.pos += 1;
        }
        Some(value)
    }

    pub fn read_bit(&mut self) -> Option<u8> {
        self.read_bits(1).map(|v| v as u8)
    }

    pub fn bit_position(&self) -> u64 {
        self.pos
    }

    /// True when every remaining bit (final-byte padding) is zero.
    pub fn remaining_is_zero(&self) -> bool {
        let total = self.bytes.len() as u64 * 8;
        (self.pos..total).all(|p| {
            let byte = self.bytes[(p / 8) as usize];
            (byte >> (7 - (p % 8))) & 1 == 0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_mixed_widths() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3);
        w.write_bits(0xABCD, 16);
        w.write_bits(1, 1);
        w.write_bits(0, 0);
        assert_eq!(w.bit_len(), 20);
        let bytes = w.into_bytes();
        assert_eq!(bytes.len(), 3);

        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read_bits(3), Some(0b101));
        assert_eq!(r.read_bits(16), Some(0xABCD));
        assert_eq!(r.read_bits(1), Some(1));
        assert!(r.remaining_is_zero());
        assert_eq!(r.read_bits(8), None);
    }

    #[test]
    fn msb_first_layout() {
        let mut w = BitWriter::new();
        w.write_bits(1, 1); // 1000_0000
        let bytes = w.into_bytes();
        assert_eq!(bytes, vec![0x80]);
    }
}
