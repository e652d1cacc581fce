//! Carrying the sparsity pattern inside the sparse image.
//!
//! Transmitter: [`compress_pattern`] -> LDPC encode -> interleave -> LSB
//! embed, all inside [`pack_side_info`]. Receiver: [`recover_side_info`]
//! treats bits of lost pixels as erasures and undoes each stage.

pub mod interleave;
pub mod ldpc;
pub mod packet;
pub mod rle;

pub use interleave::{deinterleave, interleave};
pub use ldpc::LdpcCode;
pub use packet::{
    carrier_slots, decode_sinf, encode_sinf, pack_side_info, pack_side_info_with, read_header, read_sinf,
    recover_side_info, recover_side_info_with_header, write_sinf, PackOptions, SideInfoHeader, SideInfoPacket,
};
pub use rle::{compress_pattern, decompress_pattern};

/// Achieved compression rate `c`: compressed bits per pattern entry.
pub fn compression_rate(pattern: &crate::transform::SparsityPattern) -> f64 {
    compress_pattern(pattern).len() as f64 / pattern.len() as f64
}
