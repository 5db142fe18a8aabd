//! Canonical Huffman codes over token histograms.
//!
//! Codebooks can be large and sparsely used, so histograms are sparse
//! maps and only observed symbols receive codes. Codewords are
//! canonicalized by (length, symbol) so the serialized form is a plain
//! length array with deterministic bytes.

use std::collections::BTreeMap;

use super::BitstreamError;

/// Sparse token histogram over a codebook of known size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookHistogram {
    codebook_size: u64,
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl CodebookHistogram {
    pub fn new(codebook_size: u64) -> Self {
        CodebookHistogram {
            codebook_size,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn from_tokens(
        codebook_size: u64,
        tokens: impl IntoIterator<Item = u64>,
    ) -> Result<Self, BitstreamError> {
        let mut h = CodebookHistogram::new(codebook_size);
        for t in tokens {
            h.record(t)?;
        }
        Ok(h)
    }

    pub fn record(&mut self, token: u64) -> Result<(), BitstreamError> {
        if token >= self.codebook_size {
            return Err(BitstreamError::TokenOutOfRange {
                token,
                codebook: self.codebook_size,
            });
        }
        *self.counts.entry(token).or_insert(0) += 1;
        self.total += 1;
        Ok(())
    }

    /// Combines two shard histograms; counting can be split across
    /// threads and merged.
    pub fn merge(&mut self, other: &CodebookHistogram) -> Result<(), BitstreamError> {
        if other.codebook_size != self.codebook_size {
            return Err(BitstreamError::HistogramMismatch {
                left: self.codebook_size,
                right: other.codebook_size,
            });
        }
        for (&token, &count) in &other.counts {
            *self.counts.entry(token).or_insert(0) += count;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn codebook_size(&self) -> u64 {
        self.codebook_size
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, token: u64) -> u64 {
        self.counts.get(&token).copied().unwrap_or(0)
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&t, &c)| (t, c))
    }

    pub fn nonzero_len(&self) -> usize {
        self.counts.len()
    }

    /// Shannon entropy of the observed distribution in bits/token.
    pub fn entropy_bits(&self) -> Result<f64, BitstreamError> {
        if self.total == 0 {
            return Err(BitstreamError::NoData);
        }
        let total = self.total as f64;
        Ok(self
            .counts
            .values()
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum())
    }
}

/// Entropy normalized by the codebook's maximum entropy `log2 N`,
/// in `[0, 1]`. The full codebook size is the normalizer even when some
/// codes are never observed.
pub fn normalized_entropy(h: &CodebookHistogram) -> Result<f64, BitstreamError> {
    if h.codebook_size() < 2 {
        return Err(BitstreamError::InvalidCodebook(h.codebook_size()));
    }
    Ok(h.entropy_bits()? / (h.codebook_size() as f64).log2())
}

/// Canonical Huffman table: code lengths plus derived codewords for the
/// observed symbols, sorted by (length, symbol).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    /// (symbol, code length, codeword), canonical order.
    entries: Vec<(u64, u8, u64)>,
}

impl HuffmanTable {
    /// Builds the optimal prefix code for the observed symbols.
    ///
    /// A lone symbol still gets a 1-bit code so payload lengths stay
    /// well-defined.
    pub fn build(h: &CodebookHistogram) -> Result<Self, BitstreamError> {
        if h.total() == 0 {
            return Err(BitstreamError::NoData);
        }
        let symbols: Vec<(u64, u64)> = h.nonzero().collect();
        let lengths = if symbols.len() == 1 {
            vec![1u8]
        } else {
            code_lengths(&symbols)
        };
        let mut with_lengths: Vec<(u64, u8)> = symbols
            .iter()
            .map(|&(s, _)| s)
            .zip(lengths)
            .collect();
        Self::from_lengths_inner(&mut with_lengths)
    }

    /// Rebuilds a table from (symbol, length) pairs, e.g. when parsing a
    /// serialized container. Zero lengths mean "no code" and must not
    /// appear here.
    pub fn from_lengths(pairs: &[(u64, u8)]) -> Result<Self, BitstreamError> {
        let mut pairs = pairs.to_vec();
        Self::from_lengths_inner(&mut pairs)
    }

    fn from_lengths_inner(pairs: &mut [(u64, u8)]) -> Result<Self, BitstreamError> {
        if pairs.is_empty() {
            return Err(BitstreamError::NoData);
        }
        // Kraft inequality guards undecodable length sets
        let mut kraft = 0f64;
        for &(_, l) in pairs.iter() {
            if l == 0 || l > 63 {
                return Err(BitstreamError::InvalidCodeLengths);
            }
            kraft += (0.5f64).powi(l as i32);
        }
        if kraft > 1.0 + 1e-12 {
            return Err(BitstreamError::InvalidCodeLengths);
        }
        pairs.sort_by_key(|&(s, l)| (l, s));
        let mut entries = Vec::with_capacity(pairs.len());
        let mut code = 0u64;
        let mut prev_len = 0u8;
        for &(symbol, len) in pairs.iter() {
            code <<= len - prev_len;
            entries.push((symbol, len, code));
            code += 1;
            prev_len = len;
        }
        Ok(HuffmanTable { entries })
    }

    pub fn entries(&self) -> &[(u64, u8, u64)] {
        &self.entries
    }

    pub fn len_of(&self, symbol: u64) -> Option<u8> {
        self.entries
            .iter()
            .find(|&&(s, _, _)| s == symbol)
            .map(|&(_, l, _)| l)
    }

    pub fn code_of(&self, symbol: u64) -> Option<(u64, u8)> {
        self.entries
            .iter()
            .find(|&&(s, _, _)| s == symbol)
            .map(|&(_, l, c)| (c, l))
    }

    pub fn max_length(&self) -> u8 {
        self.entries.iter().map(|&(_, l, _)| l).max().unwrap_or(0)
    }

    /// Expected code length in bits under the histogram's distribution.
    pub fn average_length(&self, h: &CodebookHistogram) -> Result<f64, BitstreamError> {
        let weighted = self.weighted_length_sum(h)?;
        Ok(weighted as f64 / h.total() as f64)
    }

    /// `sum_x count(x) * l(x)`, exact.
    pub fn weighted_length_sum(&self, h: &CodebookHistogram) -> Result<u128, BitstreamError> {
        if h.total() == 0 {
            return Err(BitstreamError::NoData);
        }
        let mut sum: u128 = 0;
        for (symbol, count) in h.nonzero() {
            let len = self
                .len_of(symbol)
                .ok_or(BitstreamError::SymbolWithoutCode(symbol))?;
            sum += count as u128 * len as u128;
        }
        Ok(sum)
    }
}

/// Huffman code lengths via the classic two-queue merge over counts.
fn code_lengths(symbols: &[(u64, u64)]) -> Vec<u8> {
    #[derive(Debug)]
    enum Node {
        Leaf(usize),
        Internal(usize, usize),
    }
    let mut nodes: Vec<(u64, Node)> = symbols
        .iter()
        .enumerate()
        .map(|(i, &(_, c))| (c, Node::Leaf(i)))
        .collect();
    // queue of active node indices ordered by weight; ties broken by
    // insertion order for determinism
    let mut active: Vec<usize> = (0..nodes.len()).collect();
    while active.len() > 1 {
        active.sort_by_key(|&i| nodes[i].0);
        let a = active.remove(0);
        let b = active.remove(0);
        let w = nodes[a].0 + nodes[b].0;
        nodes.push((w, Node::Internal(a, b)));
        active.push(nodes.len() - 1);
    }
    let mut lengths = vec![0u8; symbols.len()];
    let mut stack = vec![(active[0], 0u8)];
    while let Some((i, depth)) = stack.pop() {
        match nodes[i].1 {
            Node::Leaf(s) => lengths[s] = depth.max(1),
            Node::Internal(a, b) => {
                stack.push((a, depth + 1));
                stack.push((b, depth + 1));
            }
        }
    }
    lengths
}

/// Decodes canonical codewords from an MSB-first bit reader.
pub struct HuffmanDecoder {
    // per length: (first code at that length, canonical-rank offset)
    by_length: Vec<(u8, u64, usize)>,
    symbols: Vec<u64>,
}

impl HuffmanDecoder {
    pub fn new(table: &HuffmanTable) -> Self {
        let mut by_length: Vec<(u8, u64, usize)> = Vec::new();
        let mut symbols = Vec::with_capacity(table.entries().len());
        for (rank, &(symbol, len, code)) in table.entries().iter().enumerate() {
            if by_length.last().map(|&(l, _, _)| l) != Some(len) {
                by_length.push((len, code, rank));
            }
            symbols.push(symbol);
        }
        HuffmanDecoder { by_length, symbols }
    }

    /// Reads one symbol; `None` on exhausted input or an invalid code.
    pub fn decode(&self, reader: &mut super::bits::BitReader<'_>) -> Option<u64> {
        let mut code = 0u64;
        let mut len = 0u8;
        let mut cursor = 0usize;
        loop {
            code = (code << 1) | reader.read_bit()? as u64;
            len += 1;
            while cursor < self.by_length.len() && self.by_length[cursor].0 < len {
                cursor += 1;
            }
            if cursor >= self.by_length.len() {
                return None;
            }
            let (l, first, rank) = self.by_length[cursor];
            if l == len {
                let span_end = self
                    .by_length
                    .get(cursor + 1)
                    .map(|&(_, _, r)| r)
                    .unwrap_or(self.symbols.len());
                let idx = code.checked_sub(first)? as usize + rank;
                if idx < span_end {
                    return Some(self.symbols[idx]);
                }
            }
        }
    }
}
