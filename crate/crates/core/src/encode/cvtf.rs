//! CVTF: a flat little-endian container for labelled tensor datasets.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CVTF"
//! 4       2     format version (u16, currently 1)
//! 6       8     sample count (u64)
//! 14      2     channels (u16)
//! 16      2     rows (u16)
//! 18      2     cols (u16)
//! 20      1     dtype (0 = f32)
//! 21      ...   count * channels * rows * cols values, row-major
//! ...     count one label byte per sample
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVTF";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvtfHeader {
    pub count: u64,
    pub channels: u16,
    pub rows: u16,
    pub cols: u16,
}

impl CvtfHeader {
    pub fn sample_len(&self) -> usize {
        self.channels as usize * self.rows as usize * self.cols as usize
    }

    fn payload_len(&self) -> Result<u64> {
        (self.sample_len() as u64)
            .checked_mul(self.count)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::Format("shape overflow".into()))
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6..14].copy_from_slice(&self.count.to_le_bytes());
        h[14..16].copy_from_slice(&self.channels.to_le_bytes());
        h[16..18].copy_from_slice(&self.rows.to_le_bytes());
        h[18..20].copy_from_slice(&self.cols.to_le_bytes());
        h[20] = DTYPE_F32;
        h
    }

    pub fn decode(h: &[u8; HEADER_LEN]) -> Result<Self> {
        if &h[0..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([h[4], h[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        if h[20] != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype {}", h[20])));
        }
        let header = CvtfHeader {
            count: u64::from_le_bytes(h[6..14].try_into().unwrap()),
            channels: u16::from_le_bytes([h[14], h[15]]),
            rows: u16::from_le_bytes([h[16], h[17]]),
            cols: u16::from_le_bytes([h[18], h[19]]),
        };
        header.payload_len()?;
        Ok(header)
    }
}

/// Streaming writer; labels are buffered and written by [`CvtfWriter::finish`].
pub struct CvtfWriter<W: Write> {
    inner: W,
    header: CvtfHeader,
    written: u64,
    labels: Vec<u8>,
}

impl<W: Write> CvtfWriter<W> {
    pub fn new(mut inner: W, header: CvtfHeader) -> Result<Self> {
        header.payload_len()?;
        inner.write_all(&header.encode())?;
        Ok(CvtfWriter {
            inner,
            header,
            written: 0,
            labels: Vec::with_capacity(header.count as usize),
        })
    }

    pub fn push(&mut self, values: &[f32], label: u8) -> Result<()> {
        if values.len() != self.header.sample_len() {
            return Err(Error::Length {
                expected: self.header.sample_len(),
                got: values.len(),
            });
        }
        if self.written == self.header.count {
            return Err(Error::Format("more samples than declared".into()));
        }
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&bytes)?;
        self.labels.push(label);
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.count {
            return Err(Error::Format(format!(
                "declared {} samples, wrote {}",
                self.header.count, self.written
            )));
        }
        self.inner.write_all(&self.labels)?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// A fully loaded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CvtfData {
    pub header: CvtfHeader,
    pub values: Vec<f32>,
    pub labels: Vec<u8>,
}

impl CvtfData {
    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.header.sample_len();
        &self.values[i * n..(i + 1) * n]
    }
}

pub fn write_dataset<W: Write>(w: W, shape: [u16; 3], values: &[f32], labels: &[u8]) -> Result<()> {
    let header = CvtfHeader {
        count: labels.len() as u64,
        channels: shape[0],
        rows: shape[1],
        cols: shape[2],
    };
    let n = header.sample_len();
    if values.len() != n * labels.len() {
        return Err(Error::Length {
            expected: n * labels.len(),
            got: values.len(),
        });
    }
    let mut writer = CvtfWriter::new(w, header)?;
    for (i, &l) in labels.iter().enumerate() {
        writer.push(&values[i * n..(i + 1) * n], l)?;
    }
    writer.finish()?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::IoBare(e),
    })
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<CvtfData> {
    let mut h = [0u8; HEADER_LEN];
    read_exact_or_truncated(&mut r, &mut h)?;
    let header = CvtfHeader::decode(&h)?;
    let total = header.payload_len()? as usize;
    let mut bytes = vec![0u8; total];
    read_exact_or_truncated(&mut r, &mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut labels = vec![0u8; header.count as usize];
    read_exact_or_truncated(&mut r, &mut labels)?;
    Ok(CvtfData { header, values, labels })
}

pub fn write_dataset_file(path: &Path, shape: [u16; 3], values: &[f32], labels: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(BufWriter::new(f), shape, values, labels)
}

pub fn read_dataset_file(path: &Path) -> Result<CvtfData> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f))
}

/// Random access to samples of a CVTF file without loading the payload.
pub struct CvtfFile {
    file: BufReader<File>,
    pub header: CvtfHeader,
    pub labels: Vec<u8>,
}

impl CvtfFile {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut file = BufReader::new(f);
        let mut h = [0u8; HEADER_LEN];
        read_exact_or_truncated(&mut file, &mut h)?;
        let header = CvtfHeader::decode(&h)?;
        let payload = header.payload_len()?;
        if len != HEADER_LEN as u64 + payload + header.count {
            return Err(Error::Format(format!("file length {len} does not match header")));
        }
        file.seek(SeekFrom::Start(HEADER_LEN as u64 + payload))?;
        let mut labels = vec![0u8; header.count as usize];
        read_exact_or_truncated(&mut file, &mut labels)?;
        Ok(CvtfFile { file, header, labels })
    }

    pub fn read_sample(&mut self, i: usize, out: &mut [f32]) -> Result<()> {
        let n = self.header.sample_len();
        if out.len() != n {
            return Err(Error::Length {
                expected: n,
                got: out.len(),
            });
        }
        self.file.seek(SeekFrom::Start((HEADER_LEN + i * n * 4) as u64))?;
        let mut bytes = vec![0u8; n * 4];
        read_exact_or_truncated(&mut self.file, &mut bytes)?;
        for (o, c) in out.iter_mut().zip(bytes.chunks_exact(4)) {
            *o = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_21_bytes() {
        let h = CvtfHeader {
            count: 3,
            channels: 2,
            rows: 4,
            cols: 5,
        };
        let enc = h.encode();
        assert_eq!(enc.len(), 21);
        assert_eq!(CvtfHeader::decode(&enc).unwrap(), h);
    }

    #[test]
    fn round_trip_bit_identical() {
        let values: Vec<f32> = (0..3 * 2 * 2 * 2).map(|i| (i as f32 * 0.37).sin()).collect();
        let labels = vec![1, 0, 1];
        let mut buf = Vec::new();
        write_dataset(&mut buf, [2, 2, 2], &values, &labels).unwrap();
        assert_eq!(buf.len(), 21 + values.len() * 4 + 3);
        let back = read_dataset(&buf[..]).unwrap();
        assert_eq!(back.labels, labels);
        assert!(back.values.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn empty_dataset() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, [2, 10, 10], &[], &[]).unwrap();
        assert_eq!(buf.len(), 21);
        let back = read_dataset(&buf[..]).unwrap();
        assert_eq!(back.header.count, 0);
        assert!(back.values.is_empty());
    }

    #[test]
    fn format_errors() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, [1, 1, 2], &[1.0, 2.0], &[1]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_dataset(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_dataset(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(read_dataset(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let huge = CvtfHeader {
            count: u64::MAX,
            channels: 2,
            rows: 300,
            cols: 300,
        };
        assert!(CvtfHeader::decode(&huge.encode()).is_err());
    }
}
