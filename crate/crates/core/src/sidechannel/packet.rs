//! Embedding the coded pattern in the pixel LSBs and getting it back.
//!
//! Layout inside an image of `N` pixels:
//!
//! * A 296-bit header, replicated `C = clamp(N / 1184, 3, 32)` times, in bit
//!   plane 0 of pixels picked by a fixed-seed permutation. The receiver only
//!   needs `N` to find it and takes a majority over the copies that survived.
//! * The payload: the compressed pattern split over one or more LDPC
//!   codewords, concatenated, interleaved, whitened with a seeded keystream,
//!   and written to every `(pixel, plane < lsb_budget)` slot in row-major
//!   pixel order, lowest plane first, skipping header slots.
//!
//! Lost pixels erase every bit they carried. Recovery either reproduces the
//! pattern bit for bit or fails.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::interleave::{deinterleave, interleave, permutation};
use super::ldpc::LdpcCode;
use super::rle::{compress_pattern, decompress_pattern};
use crate::error::{check_dims, Error, Result};
use crate::image::{quantize, Image, SamplingMask};
use crate::transform::SparsityPattern;

pub const HEADER_BYTES: usize = 37;
pub const HEADER_BITS: usize = HEADER_BYTES * 8;
pub const MIN_HEADER_COPIES: usize = 3;
pub const MAX_HEADER_COPIES: usize = 32;
/// Code rate is kept this fraction below the erasure-channel capacity.
pub const RATE_MARGIN: f64 = 0.1;
pub const MAX_BLOCK_LENGTH: usize = 16384;
const MIN_BLOCK_LENGTH: usize = 64;
pub const MAX_LSB_BUDGET: u8 = 7;
pub const DEFAULT_LDPC_SEED: u64 = 0x1d9c_5eed;
pub const DEFAULT_INTERLEAVER_SEED: u64 = 0x17e4_1ea5;
const HEADER_PLACEMENT_SEED: u64 = 0x4ead_e125;
const HEADER_WHITENING_SEED: u64 = 0x3417_e5ed;

/// Everything the receiver needs to undo the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideInfoHeader {
    /// Length of the compressed pattern in bits.
    pub compressed_length: u32,
    pub ldpc_n: u32,
    pub ldpc_k: u32,
    pub interleaver_seed: u64,
    pub ldpc_seed: u64,
    pub pattern_width: u32,
    pub pattern_height: u32,
    pub lsb_budget: u8,
}

impl SideInfoHeader {
    pub fn codewords(&self) -> usize {
        (self.compressed_length as usize)
            .div_ceil(self.ldpc_k.max(1) as usize)
            .max(1)
    }

    pub fn payload_bits(&self) -> usize {
        self.codewords() * self.ldpc_n as usize
    }

    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..4].copy_from_slice(&self.compressed_length.to_be_bytes());
        out[4..8].copy_from_slice(&self.ldpc_n.to_be_bytes());
        out[8..12].copy_from_slice(&self.ldpc_k.to_be_bytes());
        out[12..20].copy_from_slice(&self.interleaver_seed.to_be_bytes());
        out[20..28].copy_from_slice(&self.ldpc_seed.to_be_bytes());
        out[28..32].copy_from_slice(&self.pattern_width.to_be_bytes());
        out[32..36].copy_from_slice(&self.pattern_height.to_be_bytes());
        out[36] = self.lsb_budget;
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_BYTES]) -> Self {
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
        SideInfoHeader {
            compressed_length: u32_at(0),
            ldpc_n: u32_at(4),
            ldpc_k: u32_at(8),
            interleaver_seed: u64_at(12),
            ldpc_seed: u64_at(20),
            pattern_width: u32_at(28),
            pattern_height: u32_at(32),
            lsb_budget: bytes[36],
        }
    }

    fn to_bits(self) -> Vec<bool> {
        self.to_bytes()
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |i| b >> i & 1 == 1))
            .collect()
    }

    fn from_bits(bits: &[bool]) -> Self {
        let mut bytes = [0u8; HEADER_BYTES];
        for (i, chunk) in bits.chunks(8).enumerate() {
            bytes[i] = chunk.iter().fold(0, |acc, &b| acc << 1 | b as u8);
        }
        SideInfoHeader::from_bytes(&bytes)
    }

    /// Checks that the header describes a payload that fits an image of
    /// `width x height`.
    fn validate(&self, width: usize, height: usize) -> Result<()> {
        let bad = |why: &str| Err(Error::SideInfoUnrecoverable(format!("inconsistent header: {why}")));
        if (self.pattern_width as usize, self.pattern_height as usize) != (width, height) {
            return bad("pattern size differs from the image");
        }
        let (n, k) = (self.ldpc_n as usize, self.ldpc_k as usize);
        if k == 0 || n > MAX_BLOCK_LENGTH || k + 3 > n {
            return bad("code parameters out of range");
        }
        if !(1..=MAX_LSB_BUDGET).contains(&self.lsb_budget) {
            return bad("LSB budget out of range");
        }
        let pixels = width * height;
        if header_copies(pixels) * HEADER_BITS + self.payload_bits() > self.lsb_budget as usize * pixels {
            return bad("payload exceeds the declared LSB budget");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfoPacket {
    pub header: SideInfoHeader,
    /// All LDPC codewords, concatenated, before interleaving.
    pub codeword: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackOptions {
    /// Erasure probability the code is designed for.
    pub design_epsilon: f64,
    pub ldpc_seed: u64,
    pub interleaver_seed: u64,
    pub max_block_length: usize,
}

impl PackOptions {
    pub fn new(design_epsilon: f64) -> Self {
        PackOptions {
            design_epsilon,
            ldpc_seed: DEFAULT_LDPC_SEED,
            interleaver_seed: DEFAULT_INTERLEAVER_SEED,
            max_block_length: MAX_BLOCK_LENGTH,
        }
    }

    pub fn code_rate(&self) -> f64 {
        (1.0 - self.design_epsilon) * (1.0 - RATE_MARGIN)
    }
}

pub fn header_copies(pixels: usize) -> usize {
    (pixels / (4 * HEADER_BITS)).clamp(MIN_HEADER_COPIES, MAX_HEADER_COPIES)
}

/// Pixel holding bit `b` of header copy `j` is `result[j * HEADER_BITS + b]`.
fn header_pixels(pixels: usize) -> Result<Vec<usize>> {
    let needed = header_copies(pixels) * HEADER_BITS;
    if needed > pixels {
        return Err(Error::Capacity {
            required: needed,
            available: pixels,
        });
    }
    let mut perm = permutation(pixels, HEADER_PLACEMENT_SEED);
    perm.truncate(needed);
    Ok(perm)
}

fn keystream(len: usize, seed: u64) -> impl Iterator<Item = bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(move |_| rng.random::<bool>())
}

/// Payload slots as `(pixel, plane)`.
fn payload_slots(pixels: usize, budget: u8, header: &[usize]) -> impl Iterator<Item = (usize, u8)> {
    let mut is_header = vec![false; pixels];
    for &p in header {
        is_header[p] = true;
    }
    (0..pixels)
        .flat_map(move |p| (0..budget).map(move |plane| (p, plane)))
        .filter(move |&(p, plane)| !(plane == 0 && is_header[p]))
}

/// Every `(pixel, plane)` the packet writes: header copies first, then the
/// payload. All other bits of the stego image equal the sparse image.
pub fn carrier_slots(header: &SideInfoHeader) -> Result<Vec<(usize, u8)>> {
    let pixels = header.pattern_width as usize * header.pattern_height as usize;
    header.validate(header.pattern_width as usize, header.pattern_height as usize)?;
    let header_px = header_pixels(pixels)?;
    let mut out: Vec<(usize, u8)> = header_px.iter().map(|&p| (p, 0)).collect();
    out.extend(payload_slots(pixels, header.lsb_budget, &header_px).take(header.payload_bits()));
    Ok(out)
}

/// Code parameters `(n, k)` for a message of `len` bits at `rate`.
fn block_parameters(len: usize, rate: f64, max_block: usize) -> (usize, usize) {
    let k_of = |n: usize| (rate * n as f64).floor() as usize;
    if len >= k_of(max_block) {
        return (max_block, k_of(max_block));
    }
    let mut n = ((len as f64 / rate).ceil() as usize).max(MIN_BLOCK_LENGTH);
    while k_of(n) < len.max(1) {
        n += 1;
    }
    (n, k_of(n))
}

/// Compresses, encodes and embeds `pattern` into the LSBs of `sparse`.
pub fn pack_side_info(
    sparse: &Image,
    pattern: &SparsityPattern,
    design_epsilon: f64,
) -> Result<(Image, SideInfoPacket)> {
    pack_side_info_with(sparse, pattern, &PackOptions::new(design_epsilon))
}

pub fn pack_side_info_with(
    sparse: &Image,
    pattern: &SparsityPattern,
    opts: &PackOptions,
) -> Result<(Image, SideInfoPacket)> {
    check_dims(sparse.dims(), pattern.dims())?;
    if !sparse.is_quantized() {
        return Err(Error::InvalidArgument(
            "the sparse image must hold 8-bit integer pixels".into(),
        ));
    }
    if !(0.0..1.0).contains(&opts.design_epsilon) {
        return Err(Error::InvalidArgument(format!(
            "design erasure probability {} outside [0, 1)",
            opts.design_epsilon
        )));
    }
    if opts.max_block_length < MIN_BLOCK_LENGTH || opts.max_block_length > MAX_BLOCK_LENGTH {
        return Err(Error::InvalidArgument(format!(
            "block length must be within {MIN_BLOCK_LENGTH}..={MAX_BLOCK_LENGTH}"
        )));
    }
    let (width, height) = sparse.dims();
    let pixels = width * height;
    let compressed = compress_pattern(pattern);
    let (n, k) = block_parameters(compressed.len(), opts.code_rate(), opts.max_block_length);
    let code = LdpcCode::new(n, k, opts.ldpc_seed)?;

    let mut codeword = Vec::new();
    for chunk in compressed.chunks(k) {
        codeword.extend(code.encode(chunk)?);
    }

    let header_px = header_pixels(pixels)?;
    let header_slots = header_px.len();
    let required = header_slots + codeword.len();
    let budget = required.div_ceil(pixels);
    if budget > MAX_LSB_BUDGET as usize {
        return Err(Error::Capacity {
            required,
            available: MAX_LSB_BUDGET as usize * pixels,
        });
    }
    let header = SideInfoHeader {
        compressed_length: compressed.len() as u32,
        ldpc_n: n as u32,
        ldpc_k: k as u32,
        interleaver_seed: opts.interleaver_seed,
        ldpc_seed: opts.ldpc_seed,
        pattern_width: width as u32,
        pattern_height: height as u32,
        lsb_budget: budget as u8,
    };

    let mut stego: Vec<u8> = sparse.as_slice().iter().map(|&v| v as u8).collect();
    let set_bit = |px: &mut u8, plane: u8, bit: bool| {
        *px = (*px & !(1 << plane)) | ((bit as u8) << plane);
    };
    let header_bits = header.to_bits();
    let header_stream = header_bits
        .iter()
        .cycle()
        .zip(keystream(header_slots, HEADER_WHITENING_SEED));
    for (&p, (&bit, key)) in header_px.iter().zip(header_stream) {
        set_bit(&mut stego[p], 0, bit ^ key);
    }
    let payload = interleave(&codeword, opts.interleaver_seed);
    let keys = keystream(payload.len(), opts.interleaver_seed ^ HEADER_WHITENING_SEED);
    for ((p, plane), (bit, key)) in
        payload_slots(pixels, header.lsb_budget, &header_px).zip(payload.into_iter().zip(keys))
    {
        set_bit(&mut stego[p], plane, bit ^ key);
    }
    let stego = Image::new(width, height, stego.into_iter().map(f64::from).collect())?;
    Ok((stego, SideInfoPacket { header, codeword }))
}

fn lsb(value: f64, plane: u8) -> bool {
    (quantize(value) as u8) >> plane & 1 == 1
}

/// Reads the replicated header from the surviving pixels.
pub fn read_header(stego: &Image, mask: &SamplingMask) -> Result<SideInfoHeader> {
    check_dims(stego.dims(), mask.dims())?;
    let pixels = stego.len();
    let header_px =
        header_pixels(pixels).map_err(|_| Error::SideInfoUnrecoverable("image too small for a header".into()))?;
    let mut votes = [(0u32, 0u32); HEADER_BITS];
    for (i, (&p, key)) in header_px
        .iter()
        .zip(keystream(header_px.len(), HEADER_WHITENING_SEED))
        .enumerate()
    {
        if mask.is_known(p) {
            let bit = lsb(stego.as_slice()[p], 0) ^ key;
            let v = &mut votes[i % HEADER_BITS];
            if bit {
                v.1 += 1;
            } else {
                v.0 += 1;
            }
        }
    }
    let mut bits = Vec::with_capacity(HEADER_BITS);
    for (i, &(zeros, ones)) in votes.iter().enumerate() {
        if zeros == ones {
            return Err(Error::SideInfoUnrecoverable(format!(
                "header bit {i} has no decisive surviving copy"
            )));
        }
        bits.push(ones > zeros);
    }
    let header = SideInfoHeader::from_bits(&bits);
    header.validate(stego.width(), stego.height())?;
    Ok(header)
}

/// Receiver side: header, then the LDPC payload, then decompression.
pub fn recover_side_info(stego: &Image, mask: &SamplingMask) -> Result<SparsityPattern> {
    let header = read_header(stego, mask)?;
    recover_side_info_with_header(stego, mask, &header)
}

/// As [`recover_side_info`] with the header supplied out of band.
pub fn recover_side_info_with_header(
    stego: &Image,
    mask: &SamplingMask,
    header: &SideInfoHeader,
) -> Result<SparsityPattern> {
    check_dims(stego.dims(), mask.dims())?;
    header.validate(stego.width(), stego.height())?;
    let pixels = stego.len();
    let header_px = header_pixels(pixels)?;
    let total = header.payload_bits();
    let keys = keystream(total, header.interleaver_seed ^ HEADER_WHITENING_SEED);
    let received: Vec<Option<bool>> = payload_slots(pixels, header.lsb_budget, &header_px)
        .zip(keys)
        .map(|((p, plane), key)| mask.is_known(p).then(|| lsb(stego.as_slice()[p], plane) ^ key))
        .collect();
    let received = deinterleave(&received, header.interleaver_seed);

    let code = LdpcCode::new(header.ldpc_n as usize, header.ldpc_k as usize, header.ldpc_seed)?;
    let mut message = Vec::with_capacity(header.codewords() * code.k());
    for (i, word) in received.chunks(code.n()).enumerate() {
        let bits = code
            .decode(word)
            .map_err(|e| Error::SideInfoUnrecoverable(format!("codeword {} of {}: {e}", i + 1, header.codewords())))?;
        message.extend(bits);
    }
    message.truncate(header.compressed_length as usize);
    decompress_pattern(&message, header.pattern_width as usize, header.pattern_height as usize)
        .map_err(|e| Error::SideInfoUnrecoverable(format!("pattern stream: {e}")))
}

const SINF_MAGIC: &[u8; 4] = b"SINF";

pub fn encode_sinf(header: &SideInfoHeader) -> Vec<u8> {
    let mut out = SINF_MAGIC.to_vec();
    out.extend_from_slice(&header.to_bytes());
    out
}

pub fn decode_sinf(bytes: &[u8]) -> Result<SideInfoHeader> {
    if bytes.len() < 4 + HEADER_BYTES || &bytes[..4] != SINF_MAGIC {
        return Err(Error::Format("not a SINF sidecar".into()));
    }
    Ok(SideInfoHeader::from_bytes(
        bytes[4..4 + HEADER_BYTES].try_into().unwrap(),
    ))
}

pub fn read_sinf(path: impl AsRef<Path>) -> Result<SideInfoHeader> {
    decode_sinf(&fs::read(path)?)
}

pub fn write_sinf(path: impl AsRef<Path>, header: &SideInfoHeader) -> Result<()> {
    fs::write(path, encode_sinf(header))?;
    Ok(())
}
