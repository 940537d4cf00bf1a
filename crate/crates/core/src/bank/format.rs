//! EBANK: the on-disk layout for embedding banks.
//!
//! Little-endian, unpadded:
//!
//! ```text
//! magic        4 bytes  "EBNK"
//! version      u16      1
//! dim          u32
//! record_count u64
//! backbone_id  u16 length + UTF-8
//! record_count times:
//!   id             u16 length + UTF-8
//!   label          u8 (0 = real, 1 = fake)
//!   generator_tag  u16 length + UTF-8
//!   vector         dim x f32
//! ```

use std::fs;
use std::path::Path;

use super::{BankError, EmbeddingBank, EmbeddingRecord, Label, TruncatedAt};

pub const EBANK_MAGIC: [u8; 4] = *b"EBNK";
pub const EBANK_VERSION: u16 = 1;

pub fn encode_bank(bank: &EmbeddingBank) -> Result<Vec<u8>, BankError> {
    let dim = u32::try_from(bank.dim()).map_err(|_| BankError::DimTooLarge(bank.dim()))?;
    let per_record = 2 + 1 + 2 + 4 * bank.dim();
    let mut out = Vec::with_capacity(20 + bank.backbone_id().len() + bank.len() * (per_record + 16));
    out.extend_from_slice(&EBANK_MAGIC);
    out.extend_from_slice(&EBANK_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(bank.len() as u64).to_le_bytes());
    put_str(&mut out, bank.backbone_id(), "backbone_id")?;
    for r in bank.records() {
        put_str(&mut out, &r.id, "record id")?;
        out.push(r.label.as_u8());
        put_str(&mut out, &r.generator_tag, "generator tag")?;
        for x in &r.vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str, what: &'static str) -> Result<(), BankError> {
    let len = u16::try_from(s.len()).map_err(|_| BankError::StringTooLong { what, len: s.len() })?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Writes `bank` to `path`. The payload is fully encoded before the file is
/// touched, so an encoding error leaves no file behind.
pub fn write_bank(bank: &EmbeddingBank, path: impl AsRef<Path>) -> Result<(), BankError> {
    let path = path.as_ref();
    let bytes = encode_bank(bank)?;
    fs::write(path, bytes).map_err(|source| BankError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bank(path: impl AsRef<Path>) -> Result<EmbeddingBank, BankError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| BankError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_bank(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    at: TruncatedAt,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BankError> {
        if self.buf.len() - self.pos < n {
            return Err(BankError::Truncated(self.at));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], BankError> {
        Ok(self.take(N)?.try_into().expect("slice length checked"))
    }

    fn string(&mut self, record: u64, field: &'static str) -> Result<String, BankError> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| BankError::InvalidUtf8 { record, field })
    }
}

pub fn decode_bank(bytes: &[u8]) -> Result<EmbeddingBank, BankError> {
    let mut cur = Cursor {
        buf: bytes,
        pos: 0,
        at: TruncatedAt::Header,
    };
    let magic: [u8; 4] = cur.array()?;
    if magic != EBANK_MAGIC {
        return Err(BankError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(cur.array()?);
    if version != EBANK_VERSION {
        return Err(BankError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(cur.array()?) as usize;
    if dim == 0 {
        return Err(BankError::ZeroDim);
    }
    let count = u64::from_le_bytes(cur.array()?);
    let backbone_len = u16::from_le_bytes(cur.array()?) as usize;
    let backbone_id = String::from_utf8(cur.take(backbone_len)?.to_vec()).map_err(|_| BankError::InvalidUtf8 {
        record: 0,
        field: "backbone_id",
    })?;

    // Cap the pre-allocation by what the remaining bytes could possibly hold.
    let min_record = 5 + 4 * dim;
    let plausible = (bytes.len() - cur.pos) / min_record;
    let mut records = Vec::with_capacity((count as usize).min(plausible));
    for index in 0..count {
        cur.at = TruncatedAt::Record(index);
        let id = cur.string(index, "id")?;
        let label_byte = cur.array::<1>()?[0];
        let label = Label::from_u8(label_byte).ok_or(BankError::InvalidLabel {
            record: index,
            value: label_byte,
        })?;
        let generator_tag = cur.string(index, "generator_tag")?;
        let raw = cur.take(4 * dim)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        records.push(EmbeddingRecord {
            id,
            label,
            generator_tag,
            vector,
        });
    }
    if cur.pos != bytes.len() {
        return Err(BankError::TrailingBytes(bytes.len() - cur.pos));
    }
    EmbeddingBank::new(backbone_id, dim, records)
}
