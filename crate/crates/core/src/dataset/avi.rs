//! Minimal RIFF/AVI container support for uncompressed 24-bit DIB video.
//!
//! The writer emits a single video stream of `00db` chunks (bottom-up BGR rows
//! padded to 4 bytes) with an `idx1` index. The reader walks the RIFF tree,
//! reads the stream format from `strf`, and decodes every `00db`/`00dc` chunk
//! under `movi`, including `RIFF AVIX` extension segments. Compressed codecs
//! are rejected with a decode error.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};

const AVIF_HASINDEX: u32 = 0x10;

/// Raw decoded frames as `T x H x W x 3` RGB bytes.
pub fn read_avi(path: &Path) -> Result<Array4<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_avi(&bytes).map_err(|reason| match reason {
        DecodeFailure::Empty => Error::EmptyVideo(path.to_path_buf()),
        DecodeFailure::Malformed(reason) => Error::Decode {
            path: path.to_path_buf(),
            reason,
        },
    })
}

pub fn write_avi(path: &Path, frames: &Array4<u8>, fps: u32) -> Result<()> {
    let bytes = encode_avi(frames, fps)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
enum DecodeFailure {
    Empty,
    Malformed(String),
}

impl From<String> for DecodeFailure {
    fn from(s: String) -> Self {
        DecodeFailure::Malformed(s)
    }
}

fn row_stride(width: usize) -> usize {
    (width * 3 + 3) & !3
}

pub fn encode_avi(frames: &Array4<u8>, fps: u32) -> Result<Vec<u8>> {
    let (t, h, w, c) = frames.dim();
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    if t == 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!("cannot encode empty video {t}x{h}x{w}")));
    }
    let stride = row_stride(w);
    let frame_bytes = stride * h;
    let fps = fps.max(1);

    let mut avih = Vec::with_capacity(56);
    for v in [
        1_000_000 / fps,          // microseconds per frame
        (frame_bytes as u32) * fps, // max bytes per second
        0,                          // padding granularity
        AVIF_HASINDEX,
        t as u32,
        0, // initial frames
        1, // streams
        frame_bytes as u32,
        w as u32,
        h as u32,
        0,
        0,
        0,
        0,
    ] {
        avih.extend_from_slice(&v.to_le_bytes());
    }

    let mut strh = Vec::with_capacity(56);
    strh.extend_from_slice(b"vids");
    strh.extend_from_slice(b"DIB ");
    for v in [0u32, 0, 0, 1, fps, 0, t as u32, frame_bytes as u32, u32::MAX, 0] {
        strh.extend_from_slice(&v.to_le_bytes());
    }
    // rcFrame
    for v in [0u16, 0, w as u16, h as u16] {
        strh.extend_from_slice(&v.to_le_bytes());
    }

    let mut strf = Vec::with_capacity(40);
    strf.extend_from_slice(&40u32.to_le_bytes());
    strf.extend_from_slice(&(w as i32).to_le_bytes());
    strf.extend_from_slice(&(h as i32).to_le_bytes());
    strf.extend_from_slice(&1u16.to_le_bytes());
    strf.extend_from_slice(&24u16.to_le_bytes());
    strf.extend_from_slice(&0u32.to_le_bytes()); // BI_RGB
    strf.extend_from_slice(&(frame_bytes as u32).to_le_bytes());
    for _ in 0..4 {
        strf.extend_from_slice(&0u32.to_le_bytes());
    }

    let mut strl = Vec::new();
    strl.extend_from_slice(b"strl");
    push_chunk(&mut strl, b"strh", &strh);
    push_chunk(&mut strl, b"strf", &strf);

    let mut hdrl = Vec::new();
    hdrl.extend_from_slice(b"hdrl");
    push_chunk(&mut hdrl, b"avih", &avih);
    push_chunk(&mut hdrl, b"LIST", &strl);

    let mut movi = Vec::with_capacity(4 + t * (frame_bytes + 8));
    movi.extend_from_slice(b"movi");
    let mut idx1 = Vec::with_capacity(t * 16);
    let mut payload = vec![0u8; frame_bytes];
    for f in 0..t {
        for y in 0..h {
            // DIB rows are stored bottom-up
            let row = &mut payload[(h - 1 - y) * stride..(h - 1 - y) * stride + stride];
            for x in 0..w {
                row[x * 3] = frames[[f, y, x, 2]];
                row[x * 3 + 1] = frames[[f, y, x, 1]];
                row[x * 3 + 2] = frames[[f, y, x, 0]];
            }
        }
        let offset = movi.len() as u32;
        push_chunk(&mut movi, b"00db", &payload);
        idx1.extend_from_slice(b"00db");
        idx1.extend_from_slice(&0x10u32.to_le_bytes()); // AVIIF_KEYFRAME
        idx1.extend_from_slice(&offset.to_le_bytes());
        idx1.extend_from_slice(&(frame_bytes as u32).to_le_bytes());
    }

    let mut body = Vec::new();
    body.extend_from_slice(b"AVI ");
    push_chunk(&mut body, b"LIST", &hdrl);
    push_chunk(&mut body, b"LIST", &movi);
    push_chunk(&mut body, b"idx1", &idx1);

    let mut out = Vec::with_capacity(body.len() + 8);
    push_chunk(&mut out, b"RIFF", &body);
    Ok(out)
}

fn push_chunk(out: &mut Vec<u8>, fourcc: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(fourcc);
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(data);
    if data.len() % 2 == 1 {
        out.push(0);
    }
}

struct StreamFormat {
    width: usize,
    height: usize,
    top_down: bool,
    bytes_per_pixel: usize,
}

fn u32_at(buf: &[u8], at: usize) -> Result<u32, String> {
    buf.get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format!("truncated field at byte {at}"))
}

/// `(fourcc, payload)`.
type Chunk<'a> = (&'a [u8], &'a [u8]);

/// Split `buf` into its chunks.
fn chunks(buf: &[u8]) -> Result<Vec<Chunk<'_>>, String> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos + 8 <= buf.len() {
        let id = &buf[pos..pos + 4];
        let size = u32_at(buf, pos + 4)? as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= buf.len())
            .ok_or_else(|| format!("chunk {} overruns file", String::from_utf8_lossy(id)))?;
        out.push((id, &buf[start..end]));
        pos = end + (size & 1);
    }
    Ok(out)
}

fn parse_strf(data: &[u8]) -> Result<StreamFormat, String> {
    if data.len() < 40 {
        return Err("stream format header too short".into());
    }
    let width = u32_at(data, 4)? as i32;
    let height = u32_at(data, 8)? as i32;
    let bit_count = u16::from_le_bytes([data[14], data[15]]);
    let compression = u32_at(data, 16)?;
    if compression != 0 {
        let tag = data[16..20].to_vec();
        return Err(format!(
            "unsupported codec {:?}; only uncompressed DIB video is supported",
            String::from_utf8_lossy(&tag)
        ));
    }
    let bytes_per_pixel = match bit_count {
        24 => 3,
        32 => 4,
        other => return Err(format!("unsupported bit depth {other}")),
    };
    if width <= 0 || height == 0 {
        return Err(format!("invalid frame size {width}x{height}"));
    }
    Ok(StreamFormat {
        width: width as usize,
        height: height.unsigned_abs() as usize,
        top_down: height < 0,
        bytes_per_pixel,
    })
}

fn collect_movi<'a>(list: &'a [u8], frames: &mut Vec<&'a [u8]>) -> Result<(), String> {
    for (id, data) in chunks(list)? {
        match id {
            b"LIST" if data.len() >= 4 && &data[..4] == b"rec " => collect_movi(&data[4..], frames)?,
            [_, _, b'd', b'b'] | [_, _, b'd', b'c'] => frames.push(data),
            _ => {}
        }
    }
    Ok(())
}

fn decode_avi(bytes: &[u8]) -> Result<Array4<u8>, DecodeFailure> {
    let top = chunks(bytes)?;
    if top.is_empty() {
        return Err(DecodeFailure::Malformed("not a RIFF file".into()));
    }
    let mut format = None;
    let mut frames: Vec<&[u8]> = Vec::new();
    for (i, (id, data)) in top.iter().enumerate() {
        if *id != b"RIFF" || data.len() < 4 {
            return Err(DecodeFailure::Malformed("not a RIFF file".into()));
        }
        let form = &data[..4];
        if !(form == b"AVI " || (i > 0 && form == b"AVIX")) {
            return Err(DecodeFailure::Malformed(format!(
                "RIFF form {:?} is not AVI",
                String::from_utf8_lossy(form)
            )));
        }
        for (cid, cdata) in chunks(&data[4..])? {
            if cid != b"LIST" || cdata.len() < 4 {
                continue;
            }
            match &cdata[..4] {
                b"hdrl" => {
                    for (hid, hdata) in chunks(&cdata[4..])? {
                        if hid == b"LIST" && hdata.len() >= 4 && &hdata[..4] == b"strl" && format.is_none() {
                            let strl = chunks(&hdata[4..])?;
                            let is_video = strl
                                .iter()
                                .any(|(sid, s)| *sid == b"strh" && s.len() >= 4 && &s[..4] == b"vids");
                            if let Some((_, strf)) = strl.iter().find(|(sid, _)| *sid == b"strf") {
                                if is_video {
                                    format = Some(parse_strf(strf)?);
                                }
                            }
                        }
                    }
                }
                b"movi" => collect_movi(&cdata[4..], &mut frames)?,
                _ => {}
            }
        }
    }
    let format = format.ok_or_else(|| DecodeFailure::Malformed("no video stream header".into()))?;
    if frames.is_empty() {
        return Err(DecodeFailure::Empty);
    }
    let (w, h, bpp) = (format.width, format.height, format.bytes_per_pixel);
    let stride = (w * bpp + 3) & !3;
    let mut out = Array4::<u8>::zeros((frames.len(), h, w, 3));
    for (f, data) in frames.iter().enumerate() {
        if data.len() < stride * h {
            return Err(DecodeFailure::Malformed(format!(
                "frame {f} has {} bytes, expected {}",
                data.len(),
                stride * h
            )));
        }
        for y in 0..h {
            let src_row = if format.top_down { y } else { h - 1 - y };
            let row = &data[src_row * stride..src_row * stride + w * bpp];
            for x in 0..w {
                out[[f, y, x, 0]] = row[x * bpp + 2];
                out[[f, y, x, 1]] = row[x * bpp + 1];
                out[[f, y, x, 2]] = row[x * bpp];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(t: usize, h: usize, w: usize) -> Array4<u8> {
        Array4::from_shape_fn((t, h, w, 3), |(f, y, x, c)| ((f * 31 + y * 7 + x * 3 + c * 50) % 256) as u8)
    }

    #[test]
    fn encode_decode_odd_width() {
        let frames = pattern(3, 5, 7);
        let bytes = encode_avi(&frames, 25).unwrap();
        assert_eq!(&bytes[..4], b"RIFF");
        assert_eq!(&bytes[8..12], b"AVI ");
        let back = decode_avi(&bytes).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(decode_avi(b"hello world, not a video"), Err(DecodeFailure::Malformed(_))));
        assert!(matches!(decode_avi(b""), Err(DecodeFailure::Malformed(_))));
    }

    #[test]
    fn truncated_file_is_malformed() {
        let bytes = encode_avi(&pattern(2, 4, 4), 10).unwrap();
        let cut = &bytes[..bytes.len() - 40];
        assert!(decode_avi(cut).is_err());
    }

    #[test]
    fn stream_without_frames_is_empty() {
        let bytes = encode_avi(&pattern(1, 2, 2), 10).unwrap();
        // rewrite the single frame chunk id so no frame chunk is found
        let mut patched = bytes.clone();
        let pos = patched.windows(4).position(|w| w == b"00db").unwrap();
        patched[pos..pos + 4].copy_from_slice(b"JUNK");
        assert!(matches!(decode_avi(&patched), Err(DecodeFailure::Empty)));
    }

    #[test]
    fn missing_file_is_decode_error() {
        let err = read_avi(Path::new("/definitely/not/here.avi")).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }));
        assert!(err.to_string().contains("/definitely/not/here.avi"));
    }
}
