//! On-disk format: magic `TTv1`, a section directory and one CRC32 per
//! section, all little-endian. Text collections use their own `TTtx` file.

use std::io::{Read, Write};

use super::{element_and_text, IndexError, JumpTable, RuleWord, TinyTIndex};
use crate::labels::LabelTable;
use crate::xml::TextCollection;

const MAGIC: &[u8; 4] = b"TTv1";
const VERSION: u32 = 1;
const TEXT_MAGIC: &[u8; 4] = b"TTtx";

const S_LABELS: u32 = 1;
const S_TERM_RANKS: u32 = 2;
const S_RULES: u32 = 3;
const S_START_TAGS: u32 = 4;
const S_FIND_CLOSE: u32 = 5;
const S_JUMP: u32 = 6;
const S_MAP_OFFSETS: u32 = 7;
const S_PR_MAP: u32 = 8;
const S_TEXT_MAP: u32 = 9;
const S_SSKIP: u32 = 10;
const S_TEXT_SSKIP: u32 = 11;
const S_SPINE: u32 = 12;

fn u32s(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn u64s(v: impl IntoIterator<Item = u64>) -> Vec<u8> {
    v.into_iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn read_u32s(b: &[u8]) -> Result<Vec<u32>, IndexError> {
    if b.len() % 4 != 0 {
        return Err(IndexError::Corrupt("misaligned u32 section".into()));
    }
    Ok(b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_u64s(b: &[u8]) -> Result<Vec<u64>, IndexError> {
    if b.len() % 8 != 0 {
        return Err(IndexError::Corrupt("misaligned u64 section".into()));
    }
    Ok(b.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn label_bytes(labels: &LabelTable) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((labels.len() as u32).to_le_bytes());
    for name in labels.names() {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).ok_or(IndexError::TruncatedFile)?;
        let s = self.buf.get(self.pos..end).ok_or(IndexError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_labels(b: &[u8]) -> Result<LabelTable, IndexError> {
    let mut c = Cursor { buf: b, pos: 0 };
    let n = c.u32()? as usize;
    let mut names = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = c.u32()? as usize;
        let s = std::str::from_utf8(c.take(len)?).map_err(|_| IndexError::Corrupt("label is not UTF-8".into()))?;
        names.push(s.to_string());
    }
    Ok(LabelTable::from_names(names))
}

/// Writes `ix`; the output is a pure function of the index contents.
pub fn save_index<W: Write>(ix: &TinyTIndex, sink: &mut W) -> Result<(), IndexError> {
    let sections: Vec<(u32, Vec<u8>)> = vec![
        (S_LABELS, label_bytes(&ix.labels)),
        (S_TERM_RANKS, ix.term_ranks.clone()),
        (S_RULES, u64s(ix.rules.iter().map(|r| r.0))),
        (S_START_TAGS, u32s(&ix.start_tags)),
        (S_FIND_CLOSE, u32s(&ix.find_close)),
        (S_JUMP, u64s(ix.jump.bits.iter().copied())),
        (S_MAP_OFFSETS, u32s(&ix.map_offsets)),
        (S_PR_MAP, u32s(&ix.pr_map)),
        (S_TEXT_MAP, u32s(&ix.text_map)),
        (S_SSKIP, u32s(&ix.sskip)),
        (S_TEXT_SSKIP, u32s(&ix.text_sskip)),
        (S_SPINE, u64s(ix.spine.iter().copied())),
    ];
    let mut header = Vec::new();
    header.extend(MAGIC);
    header.extend(VERSION.to_le_bytes());
    header.extend((sections.len() as u32).to_le_bytes());
    let dir_len = sections.len() * (4 + 8 + 8 + 4);
    let mut offset = (header.len() + dir_len + 4) as u64;
    for (id, data) in &sections {
        header.extend(id.to_le_bytes());
        header.extend(offset.to_le_bytes());
        header.extend((data.len() as u64).to_le_bytes());
        header.extend(crc32fast::hash(data).to_le_bytes());
        offset += data.len() as u64;
    }
    let hcrc = crc32fast::hash(&header);
    header.extend(hcrc.to_le_bytes());
    sink.write_all(&header)?;
    for (_, data) in &sections {
        sink.write_all(data)?;
    }
    Ok(())
}

pub fn load_index<R: Read>(source: &mut R) -> Result<TinyTIndex, IndexError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    let magic = c.take(4).map_err(|_| {
        if buf.is_empty() || MAGIC.starts_with(&buf) {
            IndexError::TruncatedFile
        } else {
            IndexError::BadMagic
        }
    })?;
    if magic != MAGIC {
        return Err(if magic[..3] == MAGIC[..3] {
            IndexError::VersionMismatch(magic[3].wrapping_sub(b'0') as u32)
        } else {
            IndexError::BadMagic
        });
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(IndexError::VersionMismatch(version));
    }
    let count = c.u32()? as usize;
    let mut dir = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        dir.push((c.u32()?, c.u64()?, c.u64()?, c.u32()?));
    }
    let header_end = c.pos;
    let hcrc = c.u32()?;
    if crc32fast::hash(&buf[..header_end]) != hcrc {
        return Err(IndexError::ChecksumMismatch(0));
    }
    let section = |want: u32| -> Result<&[u8], IndexError> {
        let &(_, off, len, crc) = dir
            .iter()
            .find(|d| d.0 == want)
            .ok_or_else(|| IndexError::Corrupt(format!("missing section {want}")))?;
        let end = off.checked_add(len).ok_or(IndexError::TruncatedFile)?;
        let data = buf.get(off as usize..end as usize).ok_or(IndexError::TruncatedFile)?;
        if crc32fast::hash(data) != crc {
            return Err(IndexError::ChecksumMismatch(want));
        }
        Ok(data)
    };
    // check every section before interpreting any of them
    for d in &dir {
        section(d.0)?;
    }
    let labels = parse_labels(section(S_LABELS)?)?;
    let term_ranks = section(S_TERM_RANKS)?.to_vec();
    let rules: Vec<RuleWord> = read_u64s(section(S_RULES)?)?.into_iter().map(RuleWord).collect();
    let jump_bits = read_u64s(section(S_JUMP)?)?;
    let words_per_row = term_ranks.len().div_ceil(64);
    let (is_element, is_text) = element_and_text(&labels);
    let ix = TinyTIndex {
        term_ranks,
        jump: JumpTable {
            words_per_row,
            bits: jump_bits,
        },
        start_tags: read_u32s(section(S_START_TAGS)?)?,
        find_close: read_u32s(section(S_FIND_CLOSE)?)?,
        map_offsets: read_u32s(section(S_MAP_OFFSETS)?)?,
        pr_map: read_u32s(section(S_PR_MAP)?)?,
        text_map: read_u32s(section(S_TEXT_MAP)?)?,
        sskip: read_u32s(section(S_SSKIP)?)?,
        text_sskip: read_u32s(section(S_TEXT_SSKIP)?)?,
        spine: read_u64s(section(S_SPINE)?)?,
        rules,
        labels,
        is_element,
        is_text,
    };
    check_shape(&ix)?;
    Ok(ix)
}

/// Cheap consistency checks so that a loaded index never indexes out of
/// bounds.
fn check_shape(ix: &TinyTIndex) -> Result<(), IndexError> {
    let bad = |m: &str| Err(IndexError::Corrupt(m.to_string()));
    let sigma = ix.term_ranks.len();
    let n = ix.rules.len();
    if ix.labels.len() != sigma {
        return bad("label and rank tables disagree");
    }
    if ix.jump.bits.len() != n * ix.jump.words_per_row || ix.map_offsets.len() != n + 1 || ix.spine.len() != n.div_ceil(64) {
        return bad("table lengths disagree with rule count");
    }
    let s = ix.start_tags.len();
    if s == 0 || [ix.find_close.len(), ix.sskip.len(), ix.text_sskip.len()].iter().any(|&l| l != s) {
        return bad("start tables disagree");
    }
    let total = *ix.map_offsets.last().unwrap() as usize;
    if ix.pr_map.len() != total || ix.text_map.len() != total {
        return bad("map lengths disagree");
    }
    for (k, r) in ix.rules.iter().enumerate() {
        let lim = (sigma + k) as u32;
        if r.x().0 >= lim || r.y().0 >= lim || r.i() == 0 {
            return bad("rule references a later symbol");
        }
        if r.i() > ix.rank(r.x()) || ix.rank(r.x()) + ix.rank(r.y()) != r.rank() + 1 {
            return bad("rule ranks disagree");
        }
        if ix.map_offsets[k + 1] - ix.map_offsets[k] != r.rank() as u32 + 1 {
            return bad("map offsets disagree");
        }
    }
    let mut need = 1usize;
    for (p, &t) in ix.start_tags.iter().enumerate() {
        if t as usize >= sigma + n {
            return bad("unknown start symbol");
        }
        need = need - 1 + ix.rank(super::SymId(t)) as usize;
        if (need == 0) != (p + 1 == s) {
            return bad("start rhs is not one tree");
        }
        if ix.find_close[p] == 0 || p + ix.find_close[p] as usize > s {
            return bad("find_close out of range");
        }
    }
    Ok(())
}

pub fn save_texts<W: Write>(tc: &TextCollection, sink: &mut W) -> Result<(), IndexError> {
    let mut body = Vec::new();
    body.extend((tc.len() as u64).to_le_bytes());
    for &o in tc.offsets() {
        body.extend((o as u64).to_le_bytes());
    }
    body.extend((tc.buffer().len() as u64).to_le_bytes());
    body.extend(tc.buffer());
    sink.write_all(TEXT_MAGIC)?;
    sink.write_all(&crc32fast::hash(&body).to_le_bytes())?;
    sink.write_all(&body)?;
    Ok(())
}

pub fn load_texts<R: Read>(source: &mut R) -> Result<TextCollection, IndexError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4).map_err(|_| IndexError::BadMagic)? != TEXT_MAGIC {
        return Err(IndexError::BadMagic);
    }
    let crc = c.u32()?;
    let body_start = c.pos;
    let n = c.u64()? as usize;
    let mut offsets = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        offsets.push(c.u64()? as usize);
    }
    let len = c.u64()? as usize;
    let data = c.take(len)?;
    if crc32fast::hash(&buf[body_start..c.pos]) != crc {
        return Err(IndexError::ChecksumMismatch(0));
    }
    TextCollection::from_parts(data.to_vec(), offsets).ok_or_else(|| IndexError::Corrupt("text offsets".into()))
}
