//! Seed fan-out: every derived seed is a hash of the master seed and a label path.

use sha2::{Digest, Sha256};

/// First eight bytes (little-endian) of SHA-256 over
/// `"morphome-seed/v1" || master (LE u64) || 0x1F || label || 0x1F || ...`.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"morphome-seed/v1");
    h.update(master.to_le_bytes());
    for label in labels {
        h.update([0x1F]);
        h.update(label.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
