//! CCAP v1: the binary interchange format for activation profiles.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "CCAP" | u32 version=1 | u32 N | u32 L | L x u32 dims | u32 flags
//! per layer: d_l*N f32 magnitudes (channel-major) [+ d_l f32 column norms if flags&2]
//! [N f32 perplexities if flags&1]
//! ```
//!
//! The file must end exactly at the size implied by the header.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::profile::ActivationProfile;

pub const MAGIC: [u8; 4] = *b"CCAP";
pub const VERSION: u32 = 1;

pub const FLAG_PERPLEXITIES: u32 = 1;
pub const FLAG_COLUMN_NORMS: u32 = 1 << 1;

/// Writes `profile` to `sink` and returns the number of bytes written.
/// Invalid profiles are rejected before any byte reaches the sink.
pub fn write_profile<W: Write>(profile: &ActivationProfile, mut sink: W) -> Result<u64> {
    let bytes = encode_profile(profile)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len() as u64)
}

pub fn encode_profile(profile: &ActivationProfile) -> Result<Vec<u8>> {
    profile.ensure_valid()?;
    let to_u32 = |v: usize, what: &'static str| u32::try_from(v).map_err(|_| Error::DimensionOverflow(what));

    let n = to_u32(profile.num_samples, "sample count exceeds u32")?;
    let l = to_u32(profile.num_layers(), "layer count exceeds u32")?;
    let mut flags = 0;
    if profile.perplexities.is_some() {
        flags |= FLAG_PERPLEXITIES;
    }
    if profile.column_norms.is_some() {
        flags |= FLAG_COLUMN_NORMS;
    }

    let dims: Vec<u32> = profile
        .layer_dims
        .iter()
        .map(|&d| to_u32(d, "layer dimension exceeds u32"))
        .collect::<Result<_>>()?;
    let expected = expected_size(n, &dims, flags).ok_or(Error::DimensionOverflow("profile size overflows u64"))?;
    let capacity = usize::try_from(expected).map_err(|_| Error::DimensionOverflow("profile size exceeds usize"))?;

    let mut out = Vec::with_capacity(capacity);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&l.to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&flags.to_le_bytes());
    for (layer, block) in profile.magnitudes.iter().enumerate() {
        put_f32s(&mut out, block);
        if let Some(norms) = &profile.column_norms {
            put_f32s(&mut out, &norms[layer]);
        }
    }
    if let Some(ppl) = &profile.perplexities {
        put_f32s(&mut out, ppl);
    }
    debug_assert_eq!(out.len() as u64, expected);
    Ok(out)
}

/// Reads and validates a profile from `source`.
pub fn read_profile<R: Read>(mut source: R) -> Result<ActivationProfile> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_profile(&bytes)
}

pub fn decode_profile(bytes: &[u8]) -> Result<ActivationProfile> {
    let found = bytes.len() as u64;
    let mut cur = Cursor { bytes, pos: 0 };

    let magic: [u8; 4] = cur.take(4).map_or_else(
        || {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            m
        },
        |s| s.try_into().unwrap(),
    );
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let header_short = |needed: u64| Error::Truncated { expected: needed, found };
    let version = cur.u32().ok_or_else(|| header_short(8))?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = cur.u32().ok_or_else(|| header_short(12))?;
    let l = cur.u32().ok_or_else(|| header_short(16))?;

    // Check the dims table fits before allocating for it.
    let header_len = 4u64 * (5 + u64::from(l));
    if found < header_len {
        return Err(header_short(header_len));
    }
    let dims: Vec<u32> = (0..l).map(|_| cur.u32().unwrap()).collect();
    let flags = cur.u32().unwrap();
    if flags & !(FLAG_PERPLEXITIES | FLAG_COLUMN_NORMS) != 0 {
        return Err(Error::ReservedFlags(flags));
    }

    let expected = expected_size(n, &dims, flags).ok_or(Error::DimensionOverflow("header sizes overflow u64"))?;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { expected, found });
    }

    let n = n as usize;
    let mut magnitudes = Vec::with_capacity(dims.len());
    let mut norms = (flags & FLAG_COLUMN_NORMS != 0).then(|| Vec::with_capacity(dims.len()));
    for &d in &dims {
        magnitudes.push(cur.f32s(d as usize * n));
        if let Some(norms) = norms.as_mut() {
            norms.push(cur.f32s(d as usize));
        }
    }
    let perplexities = (flags & FLAG_PERPLEXITIES != 0).then(|| cur.f32s(n));

    ActivationProfile::new(
        n,
        dims.iter().map(|&d| d as usize).collect(),
        magnitudes,
        norms,
        perplexities,
    )
}

/// Exact byte size implied by a header, `None` on overflow.
pub fn expected_size(num_samples: u32, dims: &[u32], flags: u32) -> Option<u64> {
    let n = u64::from(num_samples);
    let mut floats: u64 = 0;
    for &d in dims {
        let d = u64::from(d);
        floats = floats.checked_add(d.checked_mul(n)?)?;
        if flags & FLAG_COLUMN_NORMS != 0 {
            floats = floats.checked_add(d)?;
        }
    }
    if flags & FLAG_PERPLEXITIES != 0 {
        floats = floats.checked_add(n)?;
    }
    let header = 4 * (5 + dims.len() as u64);
    floats.checked_mul(4)?.checked_add(header)
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(len)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    // Callers have already checked the total size.
    fn f32s(&mut self, count: usize) -> Vec<f32> {
        self.take(count * 4)
            .expect("size checked against header")
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect()
    }
}
