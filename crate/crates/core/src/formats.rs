//! Binary and text file formats.
//!
//! All binary formats are little-endian: a 4-byte magic, a `u32` version,
//! `u32` header fields, then 32-bit floats.
//!
//! - `NSEQ` image sequence: `T, H, W`, then `T*H*W` values, frame-major,
//!   row-major.
//! - `NFLW` flow set: `pairs, H, W`, then per pair `from, to` and `H*W`
//!   interleaved `(row, col)` displacements.
//! - `NVWT` network weights: variant code, seed, layer descriptors, then every
//!   array as its rank, extents and values in declaration order.

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::flow::Landmark;
use crate::image::{Flow, Image, Mask};
use crate::layers::ConvSpec;
use crate::models::{nearest_rank, ArchitectureSpec, ModelParams, Variant};

pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(VERSION);
        w
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(4 * v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        self.u32(u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?);
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != magic {
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        let mut r = Reader {
            bytes,
            pos: 4,
            what,
        };
        let v = r.u32()?;
        if v != VERSION {
            return Err(Error::Format(format!("{what}: unsupported version {v}")));
        }
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format(format!("{}: truncated file", self.what)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

// ------------------------------------------------------------------ NSEQ

pub fn encode_sequence(frames: &[Image]) -> Result<Vec<u8>> {
    let (h, w) = frames.first().map_or((0, 0), |f| f.dims());
    let mut out = Writer::new(b"NSEQ");
    out.usize(frames.len())?;
    out.usize(h)?;
    out.usize(w)?;
    for f in frames {
        f.check_same_dims(&frames[0], "encode_sequence")?;
        out.f32s(f.data());
    }
    Ok(out.0)
}

pub fn decode_sequence(bytes: &[u8]) -> Result<Vec<Image>> {
    let mut r = Reader::new(bytes, b"NSEQ", "NSEQ")?;
    let (t, h, w) = (r.usize()?, r.usize()?, r.usize()?);
    let expected = 20 + 4 * (t as u128) * (h as u128) * (w as u128);
    if bytes.len() as u128 != expected {
        return Err(Error::Format(format!(
            "NSEQ: {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let frames = (0..t)
        .map(|_| Image::new(h, w, r.f32s(h * w)?))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(frames)
}

// ------------------------------------------------------------------ NFLW

pub fn encode_flows(flows: &[Flow]) -> Result<Vec<u8>> {
    let (h, w) = flows.first().map_or((0, 0), |f| f.dims());
    let mut out = Writer::new(b"NFLW");
    out.usize(flows.len())?;
    out.usize(h)?;
    out.usize(w)?;
    let tag =
        |v: i64| u32::try_from(v).map_err(|_| Error::Format(format!("frame tag {v} is not a u32")));
    for f in flows {
        if f.dims() != (h, w) {
            return Err(Error::Format("NFLW: flows differ in size".into()));
        }
        out.u32(tag(f.from)?);
        out.u32(tag(f.to)?);
        let mut inter = Vec::with_capacity(2 * h * w);
        for r in 0..h {
            for c in 0..w {
                inter.extend(f.at(r, c));
            }
        }
        out.f32s(&inter);
    }
    Ok(out.0)
}

pub fn decode_flows(bytes: &[u8]) -> Result<Vec<Flow>> {
    let mut r = Reader::new(bytes, b"NFLW", "NFLW")?;
    let (n, h, w) = (r.usize()?, r.usize()?, r.usize()?);
    let expected = 20 + (n as u128) * (8 + 8 * (h as u128) * (w as u128));
    if bytes.len() as u128 != expected {
        return Err(Error::Format(format!(
            "NFLW: {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let flows = (0..n)
        .map(|_| {
            let (from, to) = (r.u32()? as i64, r.u32()? as i64);
            let inter = r.f32s(2 * h * w)?;
            let mut planar = vec![0.0; 2 * h * w];
            for i in 0..h * w {
                planar[i] = inter[2 * i];
                planar[h * w + i] = inter[2 * i + 1];
            }
            Flow::from_planes(h, w, planar, from, to)
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(flows)
}

// ------------------------------------------------------------------ NVWT

pub fn encode_params(p: &ModelParams) -> Result<Vec<u8>> {
    p.check()?;
    let mut out = Writer::new(b"NVWT");
    out.u32(p.variant.code());
    out.u64(p.rng_seed);
    let a = &p.arch;
    out.usize(a.conv_specs.len())?;
    out.usize(a.shared_prefix_len)?;
    out.usize(a.head_count)?;
    for (s, &up) in a.conv_specs.iter().zip(&a.upsample_after) {
        for v in [s.filter_size, s.in_channels, s.out_channels, s.stride] {
            out.usize(v)?;
        }
        out.u32(s.has_relu as u32);
        out.u32(up as u32);
    }
    for t in &p.weights {
        out.usize(t.shape().len())?;
        for &e in t.shape() {
            out.usize(e)?;
        }
        out.f32s(t.data());
    }
    Ok(out.0)
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes, b"NVWT", "NVWT")?;
    let variant = Variant::from_code(r.u32()?)?;
    let rng_seed = r.u64()?;
    let (layers, shared_prefix_len, head_count) = (r.usize()?, r.usize()?, r.usize()?);
    if layers > 4096 {
        return Err(Error::Format(format!(
            "NVWT: implausible layer count {layers}"
        )));
    }
    let mut conv_specs = Vec::with_capacity(layers);
    let mut upsample_after = Vec::with_capacity(layers);
    for _ in 0..layers {
        let (f, i, o, s) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let relu = r.u32()? != 0;
        conv_specs.push(ConvSpec::new(f, i, o, s, relu));
        upsample_after.push(r.u32()? != 0);
    }
    let arch = ArchitectureSpec {
        variant,
        conv_specs,
        upsample_after,
        shared_prefix_len,
        head_count,
    };
    arch.validate()
        .map_err(|e| Error::Format(format!("NVWT: {e}")))?;
    let weights = (0..2 * layers)
        .map(|_| {
            let rank = r.usize()?;
            if rank > 8 {
                return Err(Error::Format(format!("NVWT: implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().product();
            Tensor::new(&shape, r.f32s(n)?)
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let p = ModelParams {
        variant,
        arch,
        weights,
        rng_seed,
    };
    p.check().map_err(|e| Error::Format(format!("NVWT: {e}")))?;
    Ok(p)
}

// ------------------------------------------------------------- landmarks

/// `frame,id,row,col` with a header, sorted by `(frame, id)`.
pub fn encode_landmarks(landmarks: &[Landmark]) -> Result<String> {
    let mut sorted = landmarks.to_vec();
    sorted.sort_by_key(|l| (l.frame, l.id));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["frame", "id", "row", "col"])
        .map_err(csv_err)?;
    for l in &sorted {
        w.write_record([
            l.frame.to_string(),
            l.id.to_string(),
            l.row.to_string(),
            l.col.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("landmarks: {e}"))
}

pub fn decode_landmarks(text: &str) -> Result<Vec<Landmark>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?;
    if header != vec!["frame", "id", "row", "col"] {
        return Err(Error::Format(
            "landmarks: header must be frame,id,row,col".into(),
        ));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = |i: usize| Error::Format(format!("landmarks: bad value `{}`", field(i)));
        out.push(Landmark {
            frame: field(0).parse().map_err(|_| bad(0))?,
            id: field(1).parse().map_err(|_| bad(1))?,
            row: field(2).parse().map_err(|_| bad(2))?,
            col: field(3).parse().map_err(|_| bad(3))?,
        });
    }
    Ok(out)
}

/// Group landmarks by frame into `frames` lists ordered by id.
pub fn landmarks_by_frame(landmarks: &[Landmark], frames: usize) -> Vec<Vec<Landmark>> {
    let mut out = vec![Vec::new(); frames];
    for l in landmarks {
        if let Some(v) = out.get_mut(l.frame) {
            v.push(*l);
        }
    }
    for v in &mut out {
        v.sort_by_key(|l| l.id);
    }
    out
}

// ------------------------------------------------------------------- PGM

fn encode_pgm(h: usize, w: usize, px: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(px);
    out
}

/// 8-bit preview mapping the image's own 2nd..98th percentile to 0..255.
pub fn encode_preview(img: &Image) -> Vec<u8> {
    let mut sorted = img.data().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    let (lo, hi) = if sorted.is_empty() {
        (0.0, 1.0)
    } else {
        (nearest_rank(&sorted, 2.0), nearest_rank(&sorted, 98.0))
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    encode_pgm(
        img.rows(),
        img.cols(),
        img.data()
            .iter()
            .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8),
    )
}

/// Mask as a binary PGM, 255 inside.
pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let (h, w) = mask.dims();
    encode_pgm(h, w, mask.data().iter().map(|&b| if b { 255 } else { 0 }))
}

/// Read an 8-bit binary PGM; pixels above 127 are inside.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let bad = |m: &str| Error::Format(format!("PGM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != h * w {
        return Err(bad("pixel count does not match the header"));
    }
    Mask::new(h, w, data.iter().map(|&v| v > 127).collect())
}

// ------------------------------------------------------------- file I/O

pub fn read_sequence(path: impl AsRef<Path>) -> Result<Vec<Image>> {
    decode_sequence(&fs::read(path)?)
}

pub fn write_sequence(path: impl AsRef<Path>, frames: &[Image]) -> Result<()> {
    Ok(fs::write(path, encode_sequence(frames)?)?)
}

pub fn read_flows(path: impl AsRef<Path>) -> Result<Vec<Flow>> {
    decode_flows(&fs::read(path)?)
}

pub fn write_flows(path: impl AsRef<Path>, flows: &[Flow]) -> Result<()> {
    Ok(fs::write(path, encode_flows(flows)?)?)
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_params(&fs::read(path)?)
}

pub fn write_params(path: impl AsRef<Path>, p: &ModelParams) -> Result<()> {
    Ok(fs::write(path, encode_params(p)?)?)
}

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<Vec<Landmark>> {
    decode_landmarks(&fs::read_to_string(path)?)
}

pub fn write_landmarks(path: impl AsRef<Path>, landmarks: &[Landmark]) -> Result<()> {
    Ok(fs::write(path, encode_landmarks(landmarks)?)?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    decode_mask(&fs::read(path)?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    Ok(fs::write(path, encode_mask(mask))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;

    #[test]
    fn sequence_roundtrip_and_length() {
        let frames: Vec<Image> = (0..3)
            .map(|t| Image::from_fn(8, 16, |r, c| (t * 100 + r * 16 + c) as f32 * 0.37))
            .collect();
        let bytes = encode_sequence(&frames).unwrap();
        assert_eq!(bytes.len(), 20 + 4 * 3 * 8 * 16);
        assert_eq!(&bytes[..4], b"NSEQ");
        assert_eq!(decode_sequence(&bytes).unwrap(), frames);
        assert!(decode_sequence(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_sequence(&bad).is_err());
    }

    #[test]
    fn flow_roundtrip_is_interleaved() {
        let f = Flow::from_fn(2, 3, 4, 5, |r, c| [r as f64, -(c as f64)]);
        let bytes = encode_flows(std::slice::from_ref(&f)).unwrap();
        // header, from/to, then (row, col) of pixel (0, 1)
        let at = 20 + 8 + 8;
        let v = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        assert_eq!((v(at), v(at + 4)), (0.0, -1.0));
        assert_eq!(decode_flows(&bytes).unwrap(), vec![f]);
        assert!(encode_flows(&[Flow::zeros(2, 2, -1, 0)]).is_err());
    }

    #[test]
    fn params_roundtrip() {
        for v in [Variant::Scin, Variant::Mfin, Variant::Mfinc] {
            let p = init_params(&ArchitectureSpec::standard(v), 42).unwrap();
            let bytes = encode_params(&p).unwrap();
            assert_eq!(&bytes[..4], b"NVWT");
            assert_eq!(decode_params(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn landmark_roundtrip_and_errors() {
        let ls = vec![
            Landmark {
                frame: 1,
                id: 0,
                row: 3.25,
                col: 0.1 + 0.2,
            },
            Landmark {
                frame: 0,
                id: 1,
                row: 1.0 / 3.0,
                col: 7.0,
            },
        ];
        let text = encode_landmarks(&ls).unwrap();
        assert!(text.starts_with("frame,id,row,col\n0,1,"));
        let back = decode_landmarks(&text).unwrap();
        assert_eq!(back, vec![ls[1], ls[0]]);
        assert!(decode_landmarks("frame,id,row,col\n0,1,x,2\n").is_err());
        assert!(decode_landmarks("a,b\n").is_err());
        let grouped = landmarks_by_frame(&back, 3);
        assert_eq!(grouped.iter().map(Vec::len).collect::<Vec<_>>(), [1, 1, 0]);
    }

    #[test]
    fn mask_and_preview() {
        let m = Mask::from_fn(3, 5, |r, c| r == c);
        assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
        let img = Image::from_fn(10, 10, |r, c| (r * 10 + c) as f32);
        let pgm = encode_preview(&img);
        assert!(pgm.starts_with(b"P5\n10 10\n255\n"));
        assert_eq!(pgm.len(), 13 + 100);
        assert_eq!(pgm[13], 0);
        assert_eq!(pgm[13 + 99], 255);
    }
}
