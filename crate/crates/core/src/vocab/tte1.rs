//! TTE1: compressed vocabularies.
//!
//! ```text
//! "TTE1" | version u16 | d u32 | N u8 | shape N*u32 | epsilon f64 | count u64
//! index:    count * (token id u64 | payload offset u64 | ranks (N+1)*u16)
//! payloads: cores of each entry, concatenated, binary32
//! CRC32 of all preceding bytes
//! ```
//!
//! Index entries are sorted by token id. Payload offsets are byte offsets
//! from the start of the payload region, and each payload holds the cores
//! `G_1..G_N` in order with every core little-endian over
//! `(r_{k-1}, I_k, r_k)`.

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::{seal, unseal, ByteReader};
use crate::tt::{param_count_for, TtVector};

use super::CompressedVocab;

pub const MAGIC: &[u8; 4] = b"TTE1";
pub const VERSION: u16 = 1;
pub const MAX_ORDER: usize = u8::MAX as usize;

pub fn header_len(order: usize) -> usize {
    4 + 2 + 4 + 1 + 4 * order + 8 + 8
}

pub fn index_entry_len(order: usize) -> usize {
    8 + 8 + 2 * (order + 1)
}

/// Exact encoded size of a store.
pub fn encoded_len(vocab: &CompressedVocab) -> usize {
    let n = vocab.shape().len();
    header_len(n) + vocab.len() * index_entry_len(n) + 4 * vocab.total_params() + 4
}

pub fn encode(vocab: &CompressedVocab) -> Result<Vec<u8>> {
    let shape = vocab.shape();
    let n = shape.len();
    if n > MAX_ORDER {
        return Err(Error::InvalidShape(format!(
            "order {n} exceeds {MAX_ORDER}"
        )));
    }
    let d = u32::try_from(vocab.dim())
        .map_err(|_| Error::InvalidShape(format!("dimension {} exceeds u32", vocab.dim())))?;
    let mut buf = Vec::with_capacity(encoded_len(vocab));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    buf.push(n as u8);
    for &s in shape {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    buf.extend_from_slice(&vocab.epsilon().to_le_bytes());
    buf.extend_from_slice(&(vocab.len() as u64).to_le_bytes());

    let mut offset = 0u64;
    for (id, tt) in vocab.iter() {
        buf.extend_from_slice(&id.to_le_bytes());
        buf.extend_from_slice(&offset.to_le_bytes());
        for &r in tt.ranks() {
            let r = u16::try_from(r)
                .map_err(|_| Error::InvalidSpec(format!("rank {r} exceeds u16")))?;
            buf.extend_from_slice(&r.to_le_bytes());
        }
        offset += 4 * tt.param_count() as u64;
    }
    for (_, tt) in vocab.iter() {
        for core in tt.cores() {
            for &v in core.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    seal(&mut buf);
    Ok(buf)
}

struct Header {
    dim: usize,
    shape: Vec<usize>,
    epsilon: f64,
    count: usize,
}

fn read_header(r: &mut ByteReader<'_>) -> Result<Header> {
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let dim = r.u32()? as usize;
    let n = r.u8()? as usize;
    if n == 0 {
        return Err(Error::CorruptFile("TTE1: order 0".into()));
    }
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        let s = r.u32()? as usize;
        if s == 0 {
            return Err(Error::CorruptFile("TTE1: zero mode size".into()));
        }
        shape.push(s);
    }
    let product = shape
        .iter()
        .try_fold(1usize, |a, &s| a.checked_mul(s))
        .unwrap_or(0);
    if product != dim {
        return Err(Error::CorruptFile(format!(
            "TTE1: shape {shape:?} does not multiply to d = {dim}"
        )));
    }
    let epsilon = r.f64()?;
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::CorruptFile(format!("TTE1: bad epsilon {epsilon}")));
    }
    let count = usize::try_from(r.u64()?)
        .map_err(|_| Error::CorruptFile("TTE1: entry count overflows".into()))?;
    Ok(Header {
        dim,
        shape,
        epsilon,
        count,
    })
}

struct IndexEntry {
    id: u64,
    offset: u64,
    ranks: Vec<usize>,
}

fn read_index(r: &mut ByteReader<'_>, header: &Header) -> Result<Vec<IndexEntry>> {
    let n = header.shape.len();
    let fits = header
        .count
        .checked_mul(index_entry_len(n))
        .is_some_and(|b| b <= r.remaining());
    if !fits {
        return Err(Error::CorruptFile(
            "TTE1: index runs past end of file".into(),
        ));
    }
    let mut out = Vec::with_capacity(header.count);
    let mut expected_offset = 0u64;
    let mut last_id: Option<u64> = None;
    for _ in 0..header.count {
        let id = r.u64()?;
        let offset = r.u64()?;
        let ranks = (0..=n)
            .map(|_| r.u16().map(usize::from))
            .collect::<Result<Vec<_>>>()?;
        if last_id.is_some_and(|prev| prev >= id) {
            return Err(Error::CorruptFile(format!(
                "TTE1: token ids not strictly increasing at {id}"
            )));
        }
        if ranks[0] != 1 || ranks[n] != 1 || ranks.contains(&0) {
            return Err(Error::CorruptFile(format!(
                "TTE1: token {id} has invalid ranks {ranks:?}"
            )));
        }
        if offset != expected_offset {
            return Err(Error::CorruptFile(format!(
                "TTE1: token {id} payload offset {offset}, expected {expected_offset}"
            )));
        }
        expected_offset += 4 * param_count_for(&header.shape, &ranks) as u64;
        last_id = Some(id);
        out.push(IndexEntry { id, offset, ranks });
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<CompressedVocab> {
    let body = unseal(bytes, "TTE1")?;
    let mut r = ByteReader::new(body, "TTE1");
    let header = read_header(&mut r)?;
    let index = read_index(&mut r, &header)?;
    let payload_bytes: u64 = index
        .last()
        .map(|e| e.offset + 4 * param_count_for(&header.shape, &e.ranks) as u64)
        .unwrap_or(0);
    if payload_bytes != r.remaining() as u64 {
        return Err(Error::CorruptFile(format!(
            "TTE1: index describes {payload_bytes} payload bytes, file has {}",
            r.remaining()
        )));
    }
    let mut vocab = CompressedVocab::with_shape(header.shape.clone(), header.epsilon)
        .map_err(|e| Error::CorruptFile(format!("TTE1: {e}")))?;
    debug_assert_eq!(vocab.dim(), header.dim);
    for entry in index {
        let len = param_count_for(&header.shape, &entry.ranks);
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(r.f32()? as f64);
        }
        let tt = TtVector::from_flat_cores(header.shape.clone(), entry.ranks, &values)?;
        vocab.insert_compressed(entry.id, tt)?;
    }
    Ok(vocab)
}

/// Random access into a TTE1 file without holding the payloads in memory.
///
/// Opening streams the whole file once to check the CRC, then keeps only
/// the header and index.
pub struct IndexedFile {
    file: File,
    shape: Vec<usize>,
    epsilon: f64,
    payload_start: u64,
    index: Vec<IndexEntry>,
}

impl IndexedFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let total = file.metadata()?.len();
        if total < 4 {
            return Err(Error::CorruptFile("TTE1: file too short".into()));
        }
        let body_len = total - 4;
        let mut hasher = crc32fast::Hasher::new();
        let mut reader = BufReader::new(&mut file);
        let mut remaining = body_len;
        let mut chunk = vec![0u8; 1 << 16];
        let mut head = Vec::new();
        while remaining > 0 {
            let want = remaining.min(chunk.len() as u64) as usize;
            reader.read_exact(&mut chunk[..want])?;
            hasher.update(&chunk[..want]);
            if head.len() < (1 << 20) {
                head.extend_from_slice(&chunk[..want]);
            }
            remaining -= want as u64;
        }
        let mut crc = [0u8; 4];
        reader.read_exact(&mut crc)?;
        if hasher.finalize() != u32::from_le_bytes(crc) {
            return Err(Error::CorruptFile("TTE1: checksum mismatch".into()));
        }
        drop(reader);

        // The index may be larger than the buffered prefix.
        let mut r = ByteReader::new(&head, "TTE1");
        let header = read_header(&mut r)?;
        let index_len = header.count as u64 * index_entry_len(header.shape.len()) as u64;
        let index_start = r.position() as u64;
        let index_bytes = if index_start + index_len <= head.len() as u64 {
            head[index_start as usize..(index_start + index_len) as usize].to_vec()
        } else {
            if index_start + index_len > body_len {
                return Err(Error::CorruptFile(
                    "TTE1: index runs past end of file".into(),
                ));
            }
            let mut buf = vec![0u8; index_len as usize];
            file.seek(SeekFrom::Start(index_start))?;
            file.read_exact(&mut buf)?;
            buf
        };
        let mut ir = ByteReader::new(&index_bytes, "TTE1");
        let index = read_index(&mut ir, &header)?;
        Ok(Self {
            file,
            shape: header.shape,
            epsilon: header.epsilon,
            payload_start: index_start + index_len,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.index.iter().map(|e| e.id)
    }

    pub fn get(&mut self, id: u64) -> Result<TtVector> {
        let pos = self
            .index
            .binary_search_by_key(&id, |e| e.id)
            .map_err(|_| Error::TokenNotFound(id))?;
        let entry = &self.index[pos];
        let len = param_count_for(&self.shape, &entry.ranks);
        let mut raw = vec![0u8; 4 * len];
        self.file
            .seek(SeekFrom::Start(self.payload_start + entry.offset))?;
        self.file.read_exact(&mut raw)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        TtVector::from_flat_cores(self.shape.clone(), entry.ranks.clone(), &values)
    }

    pub fn lookup(&mut self, id: u64) -> Result<Vec<f64>> {
        Ok(self.get(id)?.reconstruct())
    }
}
