use sha2::{Digest, Sha256};

/// Stable short digest (first 16 hex characters of SHA-256).
pub fn digest_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
