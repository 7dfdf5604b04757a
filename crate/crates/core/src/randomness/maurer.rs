use super::{erfc, BitStream, PValueResult};
use crate::error::{Error, Result};

pub(super) const NAME: &str = "maurers_universal";

// Expected value and variance of the statistic for block lengths 1..=16.
const EXPECTED: [f64; 17] = [
    0.0, 0.7326495, 1.5374383, 2.4016068, 3.3112247, 4.2534266, 5.2177052, 6.1962507, 7.1836656, 8.1764248,
    9.1723243, 10.170032, 11.168765, 12.168070, 13.167693, 14.167488, 15.167379,
];
const VARIANCE: [f64; 17] = [
    0.0, 0.690, 1.338, 1.901, 2.358, 2.705, 2.954, 3.125, 3.238, 3.311, 3.356, 3.384, 3.401, 3.410, 3.416, 3.419,
    3.421,
];

/// `(expected value, variance)` of the statistic for block length `l`.
pub fn maurer_constants(l: usize) -> Option<(f64, f64)> {
    (1..=16).contains(&l).then(|| (EXPECTED[l], VARIANCE[l]))
}

/// Average log2 distance between repeated `l`-bit blocks after `q`
/// initialization blocks.
pub fn maurers_universal(bits: &BitStream, l: usize, q: usize) -> Result<PValueResult> {
    let (expected, variance) =
        maurer_constants(l).ok_or_else(|| Error::Config(format!("block length {l} outside 1..=16")))?;
    let n = bits.len();
    let needed = (q + 1000) * l;
    if n < needed {
        return Err(Error::InsufficientData { test: NAME.into(), needed, got: n });
    }
    let k = n / l - q;
    let block = |i: usize| (0..l).fold(0usize, |acc, j| (acc << 1) | bits.bit(i * l + j) as usize);
    // Last position (1-based) at which each block value was seen.
    let mut last = vec![0usize; 1 << l];
    for i in 0..q {
        last[block(i)] = i + 1;
    }
    let mut sum = 0.0;
    for i in q..q + k {
        let b = block(i);
        sum += ((i + 1 - last[b]) as f64).log2();
        last[b] = i + 1;
    }
    let fn_stat = sum / k as f64;
    let lf = l as f64;
    let c = 0.7 - 0.8 / lf + (4.0 + 32.0 / lf) * (k as f64).powf(-3.0 / lf) / 15.0;
    let sigma = c * (variance / k as f64).sqrt();
    let p = erfc((fn_stat - expected).abs() / (std::f64::consts::SQRT_2 * sigma));
    Ok(PValueResult::new(NAME, p)
        .param("block_len", l)
        .param("init_blocks", q)
        .param("test_blocks", k)
        .stat("fn", fn_stat)
        .stat("expected", expected)
        .stat("sigma", sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_for_seven() {
        assert_eq!(maurer_constants(7), Some((6.1962507, 3.125)));
        assert_eq!(maurer_constants(17), None);
    }

    #[test]
    fn periodic_block_stream_fails() {
        let block = [1u8, 0, 1, 1, 0, 0, 1];
        let bits: Vec<u8> = block.iter().copied().cycle().take(7 * 5000).collect();
        let r = maurers_universal(&BitStream::from_bits(&bits, "").unwrap(), 7, 1280).unwrap();
        assert_eq!(r.statistics["fn"], 0.0);
        assert!(r.p_value < 1e-10);
    }
}
