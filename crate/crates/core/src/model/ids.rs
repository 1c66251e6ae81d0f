use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

const MASK_48: u64 = (1 << 48) - 1;
// Odd multiplier: a bijection on the 48-bit ring, so ids only repeat after 2^48 draws.
const SPREAD: u64 = 0x9E37_79B9_7F4B;

static COUNTER: AtomicU64 = AtomicU64::new(0);
static SEED: OnceLock<u64> = OnceLock::new();

/// `call_` followed by 12 lowercase hex digits, unique within the process.
pub fn generate_tool_call_id() -> String {
    let seed = *SEED.get_or_init(rand::random::<u64>);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let v = seed.wrapping_add(n.wrapping_mul(SPREAD)) & MASK_48;
    format!("call_{v:012x}")
}
