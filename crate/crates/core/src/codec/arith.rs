//! Renormalized 32-bit binary arithmetic coder with adaptive contexts.
//!
//! Probabilities come from per-context bit counts with Laplace smoothing,
//! scaled to 16 bits and clamped away from 0 and 1 so both subintervals
//! stay non-empty. The coder is the classic low/high construction with
//! pending-bit (underflow) handling; the decoder mirrors the encoder's
//! interval arithmetic exactly, so identical context streams reproduce the
//! exact symbol sequence.

const PROB_BITS: u32 = 16;
const HALF: u32 = 0x8000_0000;
const QUARTER: u32 = 0x4000_0000;
const THREE_QUARTERS: u32 = 0xC000_0000;

/// Adaptive binary probability model: Laplace-smoothed counts, halved when
/// they saturate so the model keeps adapting.
#[derive(Debug, Clone)]
pub struct BinaryContext {
    zeros: u32,
    ones: u32,
}

impl Default for BinaryContext {
    fn default() -> Self {
        BinaryContext { zeros: 1, ones: 1 }
    }
}

impl BinaryContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// P(bit = 1) scaled to 1..=65535.
    #[inline]
    pub fn prob_one(&self) -> u32 {
        let total = (self.zeros + self.ones) as u64;
        let p = ((self.ones as u64) << PROB_BITS) / total;
        p.clamp(1, (1 << PROB_BITS) - 1) as u32
    }

    #[inline]
    pub fn update(&mut self, bit: bool) {
        if bit {
            self.ones += 1;
        } else {
            self.zeros += 1;
        }
        if self.zeros + self.ones >= 1 << PROB_BITS {
            self.zeros = (self.zeros + 1) >> 1;
            self.ones = (self.ones + 1) >> 1;
        }
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    filled: u8,
}

impl BitWriter {
    #[inline]
    fn push(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.filled += 1;
        if self.filled == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.filled = 0;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.acc <<= 8 - self.filled;
            self.bytes.push(self.acc);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    /// Reads past the end as zeros; the encoder's closing bits make the
    /// final interval unambiguous under zero fill.
    #[inline]
    fn next(&mut self) -> u32 {
        let byte = self.pos >> 3;
        let bit = if byte < self.bytes.len() {
            (self.bytes[byte] >> (7 - (self.pos & 7))) & 1
        } else {
            0
        };
        self.pos += 1;
        bit as u32
    }
}

pub struct ArithEncoder {
    low: u32,
    high: u32,
    pending: u64,
    writer: BitWriter,
}

impl Default for ArithEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ArithEncoder {
    pub fn new() -> Self {
        ArithEncoder {
            low: 0,
            high: u32::MAX,
            pending: 0,
            writer: BitWriter::default(),
        }
    }

    #[inline]
    fn emit(&mut self, bit: bool) {
        self.writer.push(bit);
        for _ in 0..self.pending {
            self.writer.push(!bit);
        }
        self.pending = 0;
    }

    /// Code one bit under P(1) = `prob_one` / 2^16 (callers pass
    /// `BinaryContext::prob_one`). The symbol-1 subinterval sits at the
    /// low end.
    pub fn encode(&mut self, bit: bool, prob_one: u32) {
        debug_assert!((1..(1 << PROB_BITS)).contains(&prob_one));
        let range = (self.high - self.low) as u64 + 1;
        let w1 = ((range * prob_one as u64) >> PROB_BITS).clamp(1, range - 1) as u32;
        if bit {
            self.high = self.low + (w1 - 1);
        } else {
            self.low += w1;
        }
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.pending += 1;
        if self.low < QUARTER {
            self.emit(false);
        } else {
            self.emit(true);
        }
        self.writer.finish()
    }
}

pub struct ArithDecoder<'a> {
    low: u32,
    high: u32,
    value: u32,
    reader: BitReader<'a>,
}

impl<'a> ArithDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        let mut reader = BitReader { bytes, pos: 0 };
        let mut value = 0u32;
        for _ in 0..32 {
            value = (value << 1) | reader.next();
        }
        ArithDecoder {
            low: 0,
            high: u32::MAX,
            value,
            reader,
        }
    }

    pub fn decode(&mut self, prob_one: u32) -> bool {
        debug_assert!((1..(1 << PROB_BITS)).contains(&prob_one));
        let range = (self.high - self.low) as u64 + 1;
        let w1 = ((range * prob_one as u64) >> PROB_BITS).clamp(1, range - 1) as u32;
        let bit = self.value.wrapping_sub(self.low) < w1;
        if bit {
            self.high = self.low + (w1 - 1);
        } else {
            self.low += w1;
        }
        loop {
            if self.high < HALF {
                // no adjustment
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.reader.next();
        }
        bit
    }
}
