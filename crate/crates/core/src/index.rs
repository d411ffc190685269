//! Packed binary codes and exhaustive Hamming search.
//!
//! Codes are stored LSB-first in 64-bit words (bit `i` lives in word `i / 64`,
//! position `i % 64`) with unused high bits kept at zero. Search is an exact
//! linear scan with a bounded max-heap; ties resolve by insertion order.

use std::collections::BinaryHeap;
use std::path::Path;

use rayon::prelude::*;

use crate::baselines::{encode_linear, LinearHasher};
use crate::bytes::{self, ByteReader};
use crate::error::{Error, Result};
use crate::hash_head::{binarize, forward, HashHeadParams};
use crate::ingest::Dataset;

pub const CODES_MAGIC: &[u8; 4] = b"BHC1";
pub const CODES_VERSION: u32 = 1;

pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

pub fn pack(bits: &[bool]) -> Vec<u64> {
    let mut words = vec![0u64; words_for(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 64] |= 1u64 << (i % 64);
        }
    }
    words
}

pub fn unpack(words: &[u64], bits: usize) -> Vec<bool> {
    (0..bits)
        .map(|i| words[i / 64] >> (i % 64) & 1 == 1)
        .collect()
}

pub fn hamming(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "hamming word count",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(hamming_unchecked(a, b))
}

#[inline]
fn hamming_unchecked(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Immutable set of `n` packed codes of `bits` bits each.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedCodeSet {
    bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
    ids: Vec<String>,
    labels: Vec<Option<u32>>,
}

impl PackedCodeSet {
    pub fn new(bits: usize) -> Result<Self> {
        if bits == 0 {
            return Err(Error::invalid("code length must be >= 1 bit"));
        }
        Ok(PackedCodeSet {
            bits,
            words_per_code: words_for(bits),
            words: Vec::new(),
            ids: Vec::new(),
            labels: Vec::new(),
        })
    }

    pub fn push_bits(
        &mut self,
        id: impl Into<String>,
        label: Option<u32>,
        code: &[bool],
    ) -> Result<()> {
        if code.len() != self.bits {
            return Err(Error::DimensionMismatch {
                context: "code length",
                expected: self.bits,
                found: code.len(),
            });
        }
        self.words.extend(pack(code));
        self.ids.push(id.into());
        self.labels.push(label);
        Ok(())
    }

    /// Appends an already packed code; stray bits above `bits` are rejected.
    pub fn push_words(
        &mut self,
        id: impl Into<String>,
        label: Option<u32>,
        words: &[u64],
    ) -> Result<()> {
        if words.len() != self.words_per_code {
            return Err(Error::DimensionMismatch {
                context: "packed code words",
                expected: self.words_per_code,
                found: words.len(),
            });
        }
        let tail = self.bits % 64;
        if tail != 0 && words[words.len() - 1] >> tail != 0 {
            return Err(Error::invalid(format!(
                "packed code has bits set beyond bit {}",
                self.bits
            )));
        }
        self.words.extend_from_slice(words);
        self.ids.push(id.into());
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn code(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels[i]
    }

    pub fn search_topk(&self, query: &[u64], k: usize) -> Result<SearchResult> {
        search_topk(self, query, k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighbor {
    /// Insertion index in the code set.
    pub index: usize,
    pub id: String,
    pub distance: u32,
    pub label: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchResult {
    /// Ascending by (distance, index).
    pub neighbors: Vec<Neighbor>,
}

fn check_query(db: &PackedCodeSet, query: &[u64], k: usize) -> Result<()> {
    if db.is_empty() {
        return Err(Error::Empty("code database"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if query.len() != db.words_per_code {
        return Err(Error::DimensionMismatch {
            context: "query code words",
            expected: db.words_per_code,
            found: query.len(),
        });
    }
    Ok(())
}

/// Bounded max-heap over rows `range` of the set; returns (distance, index) ascending.
fn scan_range(
    db: &PackedCodeSet,
    query: &[u64],
    k: usize,
    range: std::ops::Range<usize>,
) -> Vec<(u32, usize)> {
    let mut heap: BinaryHeap<(u32, usize)> = BinaryHeap::with_capacity(k + 1);
    for i in range {
        let d = hamming_unchecked(db.code(i), query);
        if heap.len() < k {
            heap.push((d, i));
        } else if d < heap.peek().unwrap().0 {
            // Later indices never win ties, so strict comparison suffices.
            heap.pop();
            heap.push((d, i));
        }
    }
    heap.into_sorted_vec()
}

fn to_result(db: &PackedCodeSet, hits: Vec<(u32, usize)>) -> SearchResult {
    SearchResult {
        neighbors: hits
            .into_iter()
            .map(|(distance, index)| Neighbor {
                index,
                id: db.ids[index].clone(),
                distance,
                label: db.labels[index],
            })
            .collect(),
    }
}

/// Exact top-k by Hamming distance, ties broken by ascending insertion index.
pub fn search_topk(db: &PackedCodeSet, query: &[u64], k: usize) -> Result<SearchResult> {
    check_query(db, query, k)?;
    Ok(to_result(db, scan_range(db, query, k, 0..db.len())))
}

/// Same result as [`search_topk`], with the scan split into `shards` contiguous
/// ranges processed in parallel and merged by (distance, index).
pub fn search_topk_sharded(
    db: &PackedCodeSet,
    query: &[u64],
    k: usize,
    shards: usize,
) -> Result<SearchResult> {
    check_query(db, query, k)?;
    let shards = shards.clamp(1, db.len());
    let chunk = db.len().div_ceil(shards);
    let mut merged: Vec<(u32, usize)> = (0..shards)
        .into_par_iter()
        .map(|s| scan_range(db, query, k, s * chunk..((s + 1) * chunk).min(db.len())))
        .flatten()
        .collect();
    merged.sort_unstable();
    merged.truncate(k);
    Ok(to_result(db, merged))
}

/// Anything that maps a feature vector to a fixed-length bit string.
pub trait BinaryEncoder {
    fn input_dim(&self) -> usize;
    fn code_bits(&self) -> usize;
    fn encode_bits(&self, x: &[f64]) -> Result<Vec<bool>>;
}

impl BinaryEncoder for HashHeadParams {
    fn input_dim(&self) -> usize {
        HashHeadParams::input_dim(self)
    }
    fn code_bits(&self) -> usize {
        HashHeadParams::code_bits(self)
    }
    fn encode_bits(&self, x: &[f64]) -> Result<Vec<bool>> {
        binarize(&forward(self, x)?.code)
    }
}

impl BinaryEncoder for LinearHasher {
    fn input_dim(&self) -> usize {
        LinearHasher::input_dim(self)
    }
    fn code_bits(&self) -> usize {
        LinearHasher::code_bits(self)
    }
    fn encode_bits(&self, x: &[f64]) -> Result<Vec<bool>> {
        encode_linear(self, x)
    }
}

/// Encodes every row of the dataset, carrying ids and labels through.
pub fn encode_dataset(encoder: &dyn BinaryEncoder, ds: &Dataset) -> Result<PackedCodeSet> {
    if encoder.input_dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            context: "encoder input dim vs feature dim",
            expected: encoder.input_dim(),
            found: ds.dim(),
        });
    }
    let mut set = PackedCodeSet::new(encoder.code_bits())?;
    for i in 0..ds.len() {
        let bits = encoder.encode_bits(ds.features.row(i))?;
        set.push_bits(ds.ids[i].clone(), Some(ds.labels[i] as u32), &bits)?;
    }
    Ok(set)
}

pub fn encode_codes(set: &PackedCodeSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + set.words.len() * 8 + set.len() * 8);
    out.extend_from_slice(CODES_MAGIC);
    bytes::put_u32(&mut out, CODES_VERSION);
    bytes::put_u32(&mut out, bytes::u32_field(set.len(), "n")?);
    bytes::put_u32(&mut out, bytes::u32_field(set.bits, "bits")?);
    for i in 0..set.len() {
        let id = set.ids[i].as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| {
            Error::invalid(format!(
                "id of {} bytes exceeds u16 length prefix",
                id.len()
            ))
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id);
        let label = match set.labels[i] {
            Some(l) => {
                i32::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds i32")))?
            }
            None => -1,
        };
        out.extend_from_slice(&label.to_le_bytes());
        for w in set.code(i) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_codes(path: &Path, set: &PackedCodeSet) -> Result<()> {
    bytes::write_file(path, &encode_codes(set)?)
}

pub fn read_codes(path: &Path) -> Result<PackedCodeSet> {
    decode_codes(path, &bytes::read_file(path)?)
}

pub fn decode_codes(path: &Path, buf: &[u8]) -> Result<PackedCodeSet> {
    let mut r = ByteReader::new(path, buf);
    r.magic(CODES_MAGIC)?;
    r.version(CODES_VERSION)?;
    let n = r.u32("n")? as usize;
    let at = r.offset();
    let bits = r.u32("bits")? as usize;
    let mut set = PackedCodeSet::new(bits).map_err(|e| r.error_at(at, e.to_string()))?;
    let mut words = vec![0u64; set.words_per_code];
    for item in 0..n {
        let len = r.u16("id length")? as usize;
        let at = r.offset();
        let id = std::str::from_utf8(r.take(len, "id")?)
            .map_err(|_| r.error_at(at, format!("id of item {item} is not UTF-8")))?
            .to_string();
        let at = r.offset();
        let label = match r.i32("label")? {
            -1 => None,
            l if l >= 0 => Some(l as u32),
            l => return Err(r.error_at(at, format!("invalid label {l}"))),
        };
        let at = r.offset();
        for w in words.iter_mut() {
            *w = r.u64("code words")?;
        }
        set.push_words(id, label, &words)
            .map_err(|e| r.error_at(at, e.to_string()))?;
    }
    r.finish()?;
    Ok(set)
}
