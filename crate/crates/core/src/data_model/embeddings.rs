//! Binary embedding dump.
//!
//! Layout (all integers little-endian, no padding):
//!
//! ```text
//! "ERUQ"  u32 version
//! repeated blocks:
//!   u32 id_len, id bytes (UTF-8), u32 m1, u32 m2, u32 n, u8 strategy,
//!   m1*m2*n f32 values, row-major, one row per embedding vector
//! ```

use std::collections::HashMap;
use std::io::{self, Read, Seek, SeekFrom, Write};

use super::{EmbeddingSet, LayerStrategy};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"ERUQ";
pub const EMBEDDING_VERSION: u32 = 1;

const FILE_HEADER_LEN: u64 = 8;

/// Writes the dump and returns the number of blocks.
pub fn write_embeddings<'a, W, I>(sets: I, mut sink: W) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a EmbeddingSet)>,
{
    sink.write_all(&EMBEDDING_MAGIC)?;
    sink.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    let mut seen = std::collections::HashSet::new();
    let mut count = 0;
    for (id, set) in sets {
        if !seen.insert(id.to_owned()) {
            return Err(Error::validation(format!("duplicate embedding block id {id:?}")));
        }
        let id_len = u32::try_from(id.len())
            .map_err(|_| Error::validation(format!("record id too long ({} bytes)", id.len())))?;
        let dims = [set.m1(), set.m2(), set.n()]
            .map(|d| u32::try_from(d).map_err(|_| Error::validation("dimension exceeds u32")));
        sink.write_all(&id_len.to_le_bytes())?;
        sink.write_all(id.as_bytes())?;
        for d in dims {
            sink.write_all(&d?.to_le_bytes())?;
        }
        sink.write_all(&[set.strategy().code()])?;
        let mut buf = Vec::with_capacity(set.data().len() * 4);
        for v in set.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
        count += 1;
    }
    sink.flush()?;
    Ok(count)
}

/// Metadata of one block in a dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub record_id: String,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub strategy: LayerStrategy,
    /// Byte offset of the block's first value.
    pub data_offset: u64,
}

impl BlockHeader {
    pub fn data_len(&self) -> u64 {
        (self.m1 * self.m2 * self.n) as u64 * 4
    }
}

struct Tracked<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Read for Tracked<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

fn corrupt(offset: u64, message: impl Into<String>) -> Error {
    Error::Corruption { offset, message: message.into() }
}

fn read_exact_at<R: Read>(r: &mut Tracked<R>, buf: &mut [u8], what: &str) -> Result<()> {
    let start = r.pos;
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => corrupt(start, format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut Tracked<R>, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_at(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_file_header<R: Read>(r: &mut Tracked<R>) -> Result<()> {
    let mut head = [0u8; 8];
    let mut filled = 0;
    while filled < head.len() {
        match r.read(&mut head[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    if filled < 4 || head[..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("bad magic: not an embedding dump".into()));
    }
    if filled < 8 {
        return Err(corrupt(4, "truncated file header"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported embedding format version {version}")));
    }
    Ok(())
}

/// Reads the next block header, or `None` at a clean end of file.
fn read_block_header<R: Read>(r: &mut Tracked<R>) -> Result<Option<BlockHeader>> {
    let start = r.pos;
    let mut len_bytes = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut len_bytes[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    match filled {
        0 => return Ok(None),
        4 => {}
        _ => return Err(corrupt(start, "truncated block header")),
    }
    let id_len = u32::from_le_bytes(len_bytes) as usize;
    let mut id = Vec::new();
    let got = r.by_ref().take(id_len as u64).read_to_end(&mut id)?;
    if got != id_len {
        return Err(corrupt(start + 4, "truncated record id"));
    }
    let record_id =
        String::from_utf8(id).map_err(|_| corrupt(start + 4, "record id is not valid UTF-8"))?;
    let m1 = read_u32(r, "m1")? as usize;
    let m2 = read_u32(r, "m2")? as usize;
    let n = read_u32(r, "n")? as usize;
    let mut code = [0u8; 1];
    read_exact_at(r, &mut code, "strategy code")?;
    let strategy = LayerStrategy::from_code(code[0])
        .ok_or_else(|| corrupt(r.pos - 1, format!("unknown strategy code {}", code[0])))?;
    if m1 == 0 || m2 == 0 || n == 0 {
        return Err(corrupt(start, format!("block {record_id:?} has a zero dimension")));
    }
    Ok(Some(BlockHeader { record_id, m1, m2, n, strategy, data_offset: r.pos }))
}

fn read_block_data<R: Read>(r: &mut Tracked<R>, header: &BlockHeader) -> Result<EmbeddingSet> {
    let len = header.data_len();
    let mut bytes = Vec::new();
    let got = r.by_ref().take(len).read_to_end(&mut bytes)? as u64;
    if got != len {
        return Err(corrupt(
            header.data_offset + got,
            format!("block {:?} truncated: {got} of {len} data bytes", header.record_id),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSet::new(header.m1, header.m2, header.n, data, header.strategy).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("block {:?}: {msg}", header.record_id)),
        other => other,
    })
}

/// Sequentially scans a dump for `record_id`.
pub fn read_embeddings<R: Read>(source: R, record_id: &str) -> Result<EmbeddingSet> {
    let mut r = Tracked { inner: source, pos: 0 };
    read_file_header(&mut r)?;
    while let Some(header) = read_block_header(&mut r)? {
        if header.record_id == record_id {
            return read_block_data(&mut r, &header);
        }
        let len = header.data_len();
        let skipped = io::copy(&mut r.by_ref().take(len), &mut io::sink())?;
        if skipped != len {
            return Err(corrupt(
                header.data_offset + skipped,
                format!("block {:?} truncated", header.record_id),
            ));
        }
    }
    Err(Error::NotFound(format!("no embedding block for record {record_id:?}")))
}

/// Header index over a seekable dump; lookups seek straight to the block.
///
/// Building the index checks that every block lies entirely inside the file,
/// so any truncation is reported here.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    blocks: Vec<BlockHeader>,
    by_id: HashMap<String, usize>,
}

impl EmbeddingIndex {
    pub fn build<R: Read + Seek>(mut source: R) -> Result<Self> {
        let total = source.seek(SeekFrom::End(0))?;
        source.seek(SeekFrom::Start(0))?;
        let mut r = Tracked { inner: source, pos: 0 };
        read_file_header(&mut r)?;
        let mut blocks: Vec<BlockHeader> = Vec::new();
        let mut by_id = HashMap::new();
        while let Some(header) = read_block_header(&mut r)? {
            let end = header.data_offset + header.data_len();
            if end > total {
                return Err(corrupt(
                    total,
                    format!(
                        "block {:?} truncated: needs {} data bytes, file ends after {}",
                        header.record_id,
                        header.data_len(),
                        total - header.data_offset
                    ),
                ));
            }
            if by_id.insert(header.record_id.clone(), blocks.len()).is_some() {
                return Err(Error::Format(format!(
                    "duplicate embedding block id {:?}",
                    header.record_id
                )));
            }
            r.inner.seek(SeekFrom::Start(end))?;
            r.pos = end;
            blocks.push(header);
        }
        debug_assert!(r.pos == total || blocks.is_empty() && r.pos == FILE_HEADER_LEN);
        Ok(Self { blocks, by_id })
    }

    pub fn blocks(&self) -> &[BlockHeader] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, record_id: &str) -> Option<&BlockHeader> {
        self.by_id.get(record_id).map(|&i| &self.blocks[i])
    }

    pub fn load<R: Read + Seek>(&self, mut source: R, record_id: &str) -> Result<EmbeddingSet> {
        let header = self
            .get(record_id)
            .ok_or_else(|| Error::NotFound(format!("no embedding block for record {record_id:?}")))?;
        source.seek(SeekFrom::Start(header.data_offset))?;
        let mut r = Tracked { inner: source, pos: header.data_offset };
        read_block_data(&mut r, header)
    }
}
