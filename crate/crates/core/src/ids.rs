//! Sortable opaque identifiers.
//!
//! Ids are 26-character Crockford base32 strings: a 48-bit millisecond
//! timestamp followed by 80 bits of randomness. Ids minted by one process are
//! strictly increasing, so lexical order matches creation order.

use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use rand::Rng;

const ALPHABET: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";
const RANDOM_MASK: u128 = (1 << 80) - 1;

static LAST: Mutex<(u64, u128)> = Mutex::new((0, 0));

/// Mints a new id, strictly greater than every id minted before it.
pub fn new_id() -> String {
    let now_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let mut last = LAST.lock();
    let (ms, random) = if now_ms > last.0 {
        (now_ms, rand::rng().random::<u128>() & (RANDOM_MASK >> 1))
    } else {
        // same (or earlier) millisecond: bump the random part
        let next = last.1 + 1;
        if next > RANDOM_MASK {
            (last.0 + 1, 0)
        } else {
            (last.0, next)
        }
    };
    *last = (ms, random);
    drop(last);
    encode(ms, random)
}

fn encode(ms: u64, random: u128) -> String {
    let value: u128 = ((ms as u128 & 0xFFFF_FFFF_FFFF) << 80) | random;
    let mut out = [0u8; 26];
    for (i, slot) in out.iter_mut().enumerate() {
        let shift = 5 * (25 - i);
        *slot = ALPHABET[((value >> shift) & 0x1F) as usize];
    }
    String::from_utf8(out.to_vec()).expect("alphabet is ascii")
}
