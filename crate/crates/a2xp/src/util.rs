//! Small shared utilities: hashing, seed derivation, float formatting.

/// FNV-1a 64-bit hash over u64 words. Used for parameter-mutation audits
/// where a stable, dependency-free digest is enough.
pub struct Fnv1a {
    state: u64,
}

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_f64_slice(&mut self, vs: &[f64]) {
        for v in vs {
            self.write_u64(v.to_bits());
        }
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

/// Hash of raw f64 bit patterns; equal iff the values are bitwise equal.
pub fn hash_f64s(vs: &[f64]) -> u64 {
    let mut h = Fnv1a::new();
    h.write_f64_slice(vs);
    h.finish()
}

/// Derives a child seed from a base seed and a purpose tag plus an index.
/// Splitmix-style mixing keeps streams for different purposes decorrelated
/// while staying reproducible across platforms.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = Fnv1a::new();
    h.write_u64(base);
    for b in tag.as_bytes() {
        h.write_u64(*b as u64);
    }
    h.write_u64(index);
    splitmix64(h.finish())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Formats a float with 9 significant digits. All CSV output goes through
/// this so reruns are byte-identical.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{v:.8e}")
}

/// Means of `windows` equal-length segments of a curve (the last segment
/// absorbs the remainder). Used for the smoothed loss-trend check.
pub fn segment_means(curve: &[f64], windows: usize) -> Vec<f64> {
    assert!(windows >= 1);
    if curve.is_empty() {
        return Vec::new();
    }
    let n = curve.len();
    let w = (n / windows).max(1);
    let mut means = Vec::new();
    let mut start = 0;
    while start < n {
        let end = if means.len() + 1 == windows { n } else { (start + w).min(n) };
        let seg = &curve[start..end];
        means.push(seg.iter().sum::<f64>() / seg.len() as f64);
        start = end;
        if means.len() == windows {
            break;
        }
    }
    means
}

/// True when the curve, smoothed into `windows` segment means, never rises
/// by more than `slack` relative to the previous segment.
pub fn smoothed_nonincreasing(curve: &[f64], windows: usize, slack: f64) -> bool {
    let means = segment_means(curve, windows);
    means
        .windows(2)
        .all(|m| m[1] <= m[0] + slack * m[0].abs().max(1.0))
}
