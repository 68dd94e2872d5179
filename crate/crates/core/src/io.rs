//! `CTF1` frame files.
//!
//! Little-endian layout: magic `CTF1`, `u32 K`, `u32 L`, `f64 delta_f`,
//! `f64 delta_t`, `u32 frame_count`, then `frame_count * K * L` interleaved
//! `(f32 re, f32 im)` pairs in k-major order.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal_model::{ChannelFrame, RadarGrid};

pub const MAGIC: &[u8; 4] = b"CTF1";
pub const HEADER_LEN: u64 = 32;

/// Writes frames sharing one grid. An empty slice needs `grid` explicitly.
pub fn write_frames<W: Write>(mut w: W, grid: &RadarGrid, frames: &[ChannelFrame]) -> Result<()> {
    if let Some(f) = frames.iter().find(|f| f.grid() != grid) {
        return Err(Error::Validation(format!(
            "frame grid {:?} differs from file grid {grid:?}",
            f.grid()
        )));
    }
    let count = u32::try_from(frames.len())
        .map_err(|_| Error::Validation("too many frames for a CTF1 file".into()))?;
    let k = u32::try_from(grid.subcarriers())
        .map_err(|_| Error::Validation("K does not fit in u32".into()))?;
    let l = u32::try_from(grid.symbols())
        .map_err(|_| Error::Validation("L does not fit in u32".into()))?;
    let mut header = Vec::with_capacity(HEADER_LEN as usize);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&k.to_le_bytes());
    header.extend_from_slice(&l.to_le_bytes());
    header.extend_from_slice(&grid.delta_f().to_le_bytes());
    header.extend_from_slice(&grid.delta_t().to_le_bytes());
    header.extend_from_slice(&count.to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for f in frames {
        buf.clear();
        for z in f.data() {
            buf.extend_from_slice(&(z.re as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `n` bytes or reports truncation at the current offset.
fn take<R: Read>(r: &mut R, offset: &mut u64, buf: &mut [u8], what: &str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Parse {
                    offset: *offset + filled as u64,
                    reason: format!("truncated {what}"),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    *offset += buf.len() as u64;
    Ok(())
}

/// Reads a whole `CTF1` stream.
pub fn read_frames<R: Read>(mut r: R) -> Result<(RadarGrid, Vec<ChannelFrame>)> {
    let mut offset = 0u64;
    let mut header = [0u8; HEADER_LEN as usize];
    take(&mut r, &mut offset, &mut header, "header")?;
    if &header[0..4] != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: format!("bad magic {:?}", String::from_utf8_lossy(&header[0..4])),
        });
    }
    let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let f64_at = |i: usize| f64::from_le_bytes(header[i..i + 8].try_into().unwrap());
    let (k, l) = (u32_at(4) as usize, u32_at(8) as usize);
    let grid = RadarGrid::new(k, l, f64_at(12), f64_at(20)).map_err(|e| Error::Parse {
        offset: 4,
        reason: e.to_string(),
    })?;
    let count = u32_at(28) as usize;

    let mut frames = Vec::with_capacity(count.min(1 << 16));
    let mut buf = vec![0u8; grid.len() * 8];
    for n in 0..count {
        let start = offset;
        take(&mut r, &mut offset, &mut buf, &format!("frame {n}"))?;
        let data: Vec<Complex64> = buf
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        let frame = ChannelFrame::new(grid, data).map_err(|e| Error::Parse {
            offset: start,
            reason: e.to_string(),
        })?;
        frames.push(frame);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Parse {
            offset,
            reason: "trailing bytes after last frame".into(),
        });
    }
    Ok((grid, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{synthesize_frame, PathParams};

    fn sample() -> (RadarGrid, Vec<ChannelFrame>) {
        let g = RadarGrid::new(8, 4, 1e6, 1e-4).unwrap();
        let p = PathParams::new(Complex64::new(1.0, -0.5), 2.3e-7, 310.0);
        let frames = (0..3)
            .map(|s| synthesize_frame(&[p], &g, 0.1, s).unwrap())
            .collect();
        (g, frames)
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let (g, frames) = sample();
        let mut bytes = Vec::new();
        write_frames(&mut bytes, &g, &frames).unwrap();
        assert_eq!(bytes.len() as u64, HEADER_LEN + 3 * 8 * 4 * 8);
        assert_eq!(&bytes[..4], b"CTF1");
        let (g2, back) = read_frames(bytes.as_slice()).unwrap();
        assert_eq!(g2, g);
        for (a, b) in frames.iter().zip(&back) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.re as f32 as f64, y.re);
                assert_eq!(x.im as f32 as f64, y.im);
            }
        }
    }

    #[test]
    fn bad_magic_is_reported_at_offset_zero() {
        let (g, frames) = sample();
        let mut bytes = Vec::new();
        write_frames(&mut bytes, &g, &frames).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            read_frames(bytes.as_slice()),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn truncation_names_the_byte_offset() {
        let (g, frames) = sample();
        let mut bytes = Vec::new();
        write_frames(&mut bytes, &g, &frames).unwrap();
        bytes.truncate(HEADER_LEN as usize + 8 * 4 * 8 + 100);
        match read_frames(bytes.as_slice()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len() as u64),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_frames(&bytes[..10]),
            Err(Error::Parse { offset: 10, .. })
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let (g, frames) = sample();
        let mut bytes = Vec::new();
        write_frames(&mut bytes, &g, &frames).unwrap();
        let end = bytes.len() as u64;
        bytes.push(0);
        assert!(matches!(
            read_frames(bytes.as_slice()),
            Err(Error::Parse { offset, .. }) if offset == end
        ));
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let (_, frames) = sample();
        let other = RadarGrid::new(4, 4, 1e6, 1e-4).unwrap();
        assert!(write_frames(Vec::new(), &other, &frames).is_err());
    }
}
