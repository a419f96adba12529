//! "MPV1" volume container: 8-byte magic, little-endian `u32` dims, `f64`
//! spacing and origin, a dtype tag (0 = i16 HU, 1 = u8 gray) and the voxels
//! x-fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{CtVolume, Geometry, GrayVolume, Volume};
use crate::error::{Error, Result};

pub const MPV_MAGIC: &[u8; 8] = b"MPVOL001";
const HEADER_LEN: usize = 8 + 3 * 4 + 6 * 8 + 1;
const FORMAT: &str = "MPV1 volume";

/// A volume of either on-disk voxel type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Hu(CtVolume),
    Gray(GrayVolume),
}

impl AnyVolume {
    pub fn geometry(&self) -> &Geometry {
        match self {
            AnyVolume::Hu(v) => v.geometry(),
            AnyVolume::Gray(v) => v.geometry(),
        }
    }

    pub fn into_hu(self) -> Result<CtVolume> {
        match self {
            AnyVolume::Hu(v) => Ok(v),
            AnyVolume::Gray(_) => Err(Error::invalid("volume dtype", "expected HU (tag 0), found gray")),
        }
    }

    pub fn into_gray(self) -> Result<GrayVolume> {
        match self {
            AnyVolume::Gray(v) => Ok(v),
            AnyVolume::Hu(_) => Err(Error::invalid("volume dtype", "expected gray (tag 1), found HU")),
        }
    }
}

impl From<CtVolume> for AnyVolume {
    fn from(v: CtVolume) -> Self {
        AnyVolume::Hu(v)
    }
}

impl From<GrayVolume> for AnyVolume {
    fn from(v: GrayVolume) -> Self {
        AnyVolume::Gray(v)
    }
}

fn header(g: &Geometry, tag: u8, out: &mut Vec<u8>) {
    out.extend_from_slice(MPV_MAGIC);
    for d in g.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in g.spacing.iter().chain(&g.origin) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.push(tag);
}

pub fn write_mpv<W: Write>(mut w: W, v: &AnyVolume) -> Result<()> {
    let g = v.geometry();
    if g.dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::invalid("dims", "extent exceeds u32"));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + g.len() * 2);
    match v {
        AnyVolume::Hu(v) => {
            header(g, 0, &mut buf);
            for x in v.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        AnyVolume::Gray(v) => {
            header(g, 1, &mut buf);
            buf.extend_from_slice(v.data());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_mpv_file(path: impl AsRef<Path>, v: &AnyVolume) -> Result<()> {
    let f = fs::File::create(path)?;
    write_mpv(std::io::BufWriter::new(f), v)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                FORMAT,
                self.buf.len() as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_mpv(bytes: &[u8]) -> Result<AnyVolume> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(8, "magic")?;
    if let Some(bad) = magic.iter().zip(MPV_MAGIC).position(|(a, b)| a != b) {
        return Err(Error::format(FORMAT, bad as u64, "bad magic"));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let at = cur.pos as u64;
        *d = cur.u32("dims")? as usize;
        if *d == 0 {
            return Err(Error::format(FORMAT, at, "zero extent"));
        }
    }
    let mut spacing = [0.0; 3];
    for s in &mut spacing {
        let at = cur.pos as u64;
        *s = cur.f64("spacing")?;
        if !(*s > 0.0) || !s.is_finite() {
            return Err(Error::format(FORMAT, at, format!("spacing {s} must be > 0")));
        }
    }
    let mut origin = [0.0; 3];
    for o in &mut origin {
        let at = cur.pos as u64;
        *o = cur.f64("origin")?;
        if !o.is_finite() {
            return Err(Error::format(FORMAT, at, "non-finite origin"));
        }
    }
    let tag_at = cur.pos as u64;
    let tag = cur.take(1, "dtype tag")?[0];
    let geometry = Geometry::new(dims, spacing, origin)?;
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(FORMAT, 8, "voxel count overflows"))?;
    let vol = match tag {
        0 => {
            let raw = cur.take(n.saturating_mul(2), "voxels")?;
            let data = raw
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
            AnyVolume::Hu(Volume::new(geometry, data)?)
        }
        1 => AnyVolume::Gray(Volume::new(geometry, cur.take(n, "voxels")?.to_vec())?),
        t => return Err(Error::format(FORMAT, tag_at, format!("unknown dtype tag {t}"))),
    };
    if cur.pos != bytes.len() {
        return Err(Error::format(FORMAT, cur.pos as u64, "trailing bytes after voxel data"));
    }
    Ok(vol)
}

pub fn read_mpv_file(path: impl AsRef<Path>) -> Result<AnyVolume> {
    read_mpv(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CtVolume {
        let g = Geometry::new([3, 2, 2], [0.7, 0.8, 2.5], [-1.5, 2.0, 100.0]).unwrap();
        CtVolume::from_fn(g, |[i, j, k]| (i as i16 - 1) * 1000 + (j * 10 + k) as i16).unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let v = sample();
        let mut buf = Vec::new();
        write_mpv(&mut buf, &v.clone().into()).unwrap();
        assert_eq!(&buf[..8], b"MPVOL001");
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..16], &2u32.to_le_bytes());
        assert_eq!(&buf[16..20], &2u32.to_le_bytes());
        assert_eq!(&buf[20..28], &0.7f64.to_le_bytes());
        assert_eq!(&buf[44..52], &(-1.5f64).to_le_bytes());
        assert_eq!(buf[68], 0);
        assert_eq!(buf.len(), 69 + 12 * 2);
        // first voxel (0,0,0) = -1000, then x advances
        assert_eq!(&buf[69..71], &(-1000i16).to_le_bytes());
        assert_eq!(&buf[71..73], &0i16.to_le_bytes());
        assert_eq!(read_mpv(&buf).unwrap(), AnyVolume::Hu(v));
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let mut buf = Vec::new();
        write_mpv(&mut buf, &sample().into()).unwrap();

        let mut bad = buf.clone();
        bad[3] = b'X';
        assert!(matches!(read_mpv(&bad), Err(Error::Format { offset: 3, .. })));

        let mut bad = buf.clone();
        bad[68] = 9;
        assert!(matches!(read_mpv(&bad), Err(Error::Format { offset: 68, .. })));

        let mut bad = buf.clone();
        bad[28..36].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(read_mpv(&bad), Err(Error::Format { offset: 28, .. })));

        let truncated = &buf[..buf.len() - 1];
        assert!(matches!(read_mpv(truncated), Err(Error::Format { .. })));

        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(
            read_mpv(&extra),
            Err(Error::Format { offset, .. }) if offset == buf.len() as u64
        ));
    }

    proptest! {
        #[test]
        fn gray_round_trip(dims in prop::array::uniform3(1usize..6), seed in any::<u8>()) {
            let g = Geometry::new(dims, [1.0, 0.5, 2.0], [3.0, -4.0, 5.5]).unwrap();
            let v = GrayVolume::from_fn(g, |[i, j, k]| seed.wrapping_add((i * 31 + j * 7 + k) as u8)).unwrap();
            let mut buf = Vec::new();
            write_mpv(&mut buf, &v.clone().into()).unwrap();
            prop_assert_eq!(read_mpv(&buf).unwrap(), AnyVolume::Gray(v));
        }
    }
}
