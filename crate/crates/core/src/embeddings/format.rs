//! EMB1 (embeddings) and LGT1 (classifier logits) binary files.
//!
//! Both are little-endian. EMB1: magic `EMB1`, u32 version (1), u8
//! normalized flag, u32 dim, u64 count, then `count` records of u16 id
//! length, id bytes, `dim` f32 values. LGT1: magic `LGT1`, u32 version (1),
//! u32 class count K, u64 count, then records of u16 id length, id bytes,
//! K f32 raw logits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const LGT_MAGIC: &[u8; 4] = b"LGT1";
pub const FORMAT_VERSION: u32 = 1;

/// Raw records as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub width: usize,
    pub normalized: bool,
    pub records: Vec<(String, Vec<f32>)>,
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated record".into())
    } else {
        Error::Format(e.to_string())
    }
}

fn read_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            std::str::from_utf8(magic).unwrap()
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn read_records(r: &mut impl Read, count: u64, width: usize) -> Result<Vec<(String, Vec<f32>)>> {
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut seen = HashSet::new();
    for _ in 0..count {
        let len = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id).map_err(truncated)?;
        let id = String::from_utf8(id).map_err(|_| Error::Format("id is not UTF-8".into()))?;
        let mut v = vec![0f32; width];
        r.read_f32_into::<LittleEndian>(&mut v).map_err(truncated)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(id));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        records.push((id, v));
    }
    Ok(records)
}

fn write_records(w: &mut impl Write, records: &[(String, Vec<f32>)], width: usize) -> io::Result<()> {
    for (id, v) in records {
        let len = u16::try_from(id.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "id longer than 65535 bytes"))?;
        if v.len() != width {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("record `{id}` has wrong width")));
        }
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(id.as_bytes())?;
        for &x in v {
            w.write_f32::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn read_emb1(r: &mut impl Read) -> Result<VectorFile> {
    read_magic(r, EMB_MAGIC)?;
    let normalized = match r.read_u8().map_err(truncated)? {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("invalid normalized flag {f}"))),
    };
    let dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if dim == 0 {
        return Err(Error::Format("dim must be positive".into()));
    }
    let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let records = read_records(r, count, dim)?;
    Ok(VectorFile { width: dim, normalized, records })
}

pub fn write_emb1(w: &mut impl Write, file: &VectorFile) -> io::Result<()> {
    w.write_all(EMB_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u8(file.normalized as u8)?;
    w.write_u32::<LittleEndian>(file.width as u32)?;
    w.write_u64::<LittleEndian>(file.records.len() as u64)?;
    write_records(w, &file.records, file.width)
}

pub fn read_lgt1(r: &mut impl Read) -> Result<VectorFile> {
    read_magic(r, LGT_MAGIC)?;
    let k = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if k == 0 {
        return Err(Error::Format("class count must be positive".into()));
    }
    let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let records = read_records(r, count, k)?;
    Ok(VectorFile { width: k, normalized: false, records })
}

pub fn write_lgt1(w: &mut impl Write, file: &VectorFile) -> io::Result<()> {
    w.write_all(LGT_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(file.width as u32)?;
    w.write_u64::<LittleEndian>(file.records.len() as u64)?;
    write_records(w, &file.records, file.width)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn save_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_emb1(path: impl AsRef<Path>) -> Result<VectorFile> {
    read_emb1(&mut open(path.as_ref())?)
}

pub fn save_emb1(path: impl AsRef<Path>, file: &VectorFile) -> Result<()> {
    save_with(path.as_ref(), |w| write_emb1(w, file))
}

pub fn load_lgt1(path: impl AsRef<Path>) -> Result<VectorFile> {
    read_lgt1(&mut open(path.as_ref())?)
}

pub fn save_lgt1(path: impl AsRef<Path>, file: &VectorFile) -> Result<()> {
    save_with(path.as_ref(), |w| write_lgt1(w, file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VectorFile {
        VectorFile {
            width: 4,
            normalized: true,
            records: vec![("r1".into(), vec![0.5, 0.5, 0.5, 0.5]), ("리뷰2".into(), vec![1.0, 0.0, 0.0, 0.0])],
        }
    }

    #[test]
    fn emb1_header_layout() {
        let mut buf = Vec::new();
        write_emb1(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[..4], &[0x45, 0x4D, 0x42, 0x31]);
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(buf[8], 1);
        assert_eq!(&buf[9..13], &4u32.to_le_bytes());
        assert_eq!(&buf[13..21], &2u64.to_le_bytes());
        assert_eq!(&buf[21..23], &2u16.to_le_bytes());
        assert_eq!(&buf[23..25], b"r1");
        assert_eq!(&buf[25..29], &0.5f32.to_le_bytes());
        assert_eq!(read_emb1(&mut buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn emb1_rejections() {
        let mut buf = Vec::new();
        write_emb1(&mut buf, &sample()).unwrap();

        let mut bad = buf.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_emb1(&mut bad.as_slice()), Err(Error::Format(m)) if m.contains("magic")));

        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_emb1(&mut &cut[..]), Err(Error::Format(m)) if m.contains("truncated")));

        let mut zero = buf.clone();
        zero[9..13].copy_from_slice(&0u32.to_le_bytes());
        assert!(read_emb1(&mut zero.as_slice()).is_err());

        let mut nan = sample();
        nan.records[1].1[2] = f32::NAN;
        let mut nbuf = Vec::new();
        write_emb1(&mut nbuf, &nan).unwrap();
        assert!(matches!(read_emb1(&mut nbuf.as_slice()), Err(Error::NonFinite(id)) if id == "리뷰2"));

        let mut dup = sample();
        dup.records[1].0 = "r1".into();
        let mut dbuf = Vec::new();
        write_emb1(&mut dbuf, &dup).unwrap();
        assert!(matches!(read_emb1(&mut dbuf.as_slice()), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn lgt1_round_trip() {
        let file = VectorFile {
            width: 5,
            normalized: false,
            records: vec![("r1#food".into(), vec![0.0, 1.5, -2.0, 0.25, 3.0])],
        };
        let mut buf = Vec::new();
        write_lgt1(&mut buf, &file).unwrap();
        assert_eq!(&buf[..4], b"LGT1");
        assert_eq!(&buf[8..12], &5u32.to_le_bytes());
        assert_eq!(read_lgt1(&mut buf.as_slice()).unwrap(), file);
        assert!(read_emb1(&mut buf.as_slice()).is_err());
    }
}
