use super::{igamc, BitStream, PValueResult};
use crate::error::{Error, Result};

pub(super) const NAME: &str = "non_overlapping_template";

fn count_matches(bits: &[u8], template: &[u8]) -> u64 {
    let m = template.len();
    let mut count = 0;
    let mut i = 0;
    while i + m <= bits.len() {
        if &bits[i..i + m] == template {
            count += 1;
            i += m;
        } else {
            i += 1;
        }
    }
    count
}

fn run(bits: &[u8], template: &[u8], blocks: usize) -> Result<PValueResult> {
    let n = bits.len();
    let m = template.len();
    if m == 0 || blocks == 0 {
        return Err(Error::Config("template and block count must be non-empty".into()));
    }
    let needed = 8 * m * blocks;
    if n < needed {
        return Err(Error::InsufficientData { test: NAME.into(), needed, got: n });
    }
    let block_len = n / blocks;
    let two_m = 2f64.powi(m as i32);
    let mu = (block_len - m + 1) as f64 / two_m;
    let sigma2 = block_len as f64 * (1.0 / two_m - (2.0 * m as f64 - 1.0) / (two_m * two_m));
    let counts: Vec<u64> = (0..blocks).map(|j| count_matches(&bits[j * block_len..(j + 1) * block_len], template)).collect();
    let chi2: f64 = counts.iter().map(|&w| (w as f64 - mu).powi(2) / sigma2).sum();
    let p = igamc(blocks as f64 / 2.0, chi2 / 2.0);
    let tpl: String = template.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
    let mut r = PValueResult::new(NAME, p)
        .param("template", tpl)
        .param("blocks", blocks)
        .param("block_len", block_len)
        .stat("mu", mu)
        .stat("sigma2", sigma2)
        .stat("chi2", chi2);
    for (j, w) in counts.iter().enumerate() {
        r = r.stat(&format!("w{j}"), *w as f64);
    }
    Ok(r)
}

/// Count non-overlapping occurrences of `template` in each of `blocks`
/// equal blocks and compare with the expected count.
pub fn non_overlapping_template(bits: &BitStream, template: &[u8], blocks: usize) -> Result<PValueResult> {
    run(&bits.to_bits(), template, blocks)
}

/// All templates of length `m` that cannot overlap a shifted copy of
/// themselves, in ascending binary order.
pub fn aperiodic_templates(m: usize) -> Vec<Vec<u8>> {
    (0u32..1 << m)
        .map(|v| (0..m).map(|i| ((v >> (m - 1 - i)) & 1) as u8).collect::<Vec<u8>>())
        .filter(|t| (1..m).all(|k| t[k..] != t[..m - k]))
        .collect()
}

pub fn template_sweep(bits: &BitStream, m: usize, blocks: usize) -> Result<Vec<PValueResult>> {
    let unpacked = bits.to_bits();
    aperiodic_templates(m).iter().map(|t| run(&unpacked, t, blocks)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aperiodic_template_count() {
        assert_eq!(aperiodic_templates(9).len(), 148);
        assert_eq!(aperiodic_templates(2), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn mean_formula() {
        let mu = (1024.0 - 9.0 + 1.0) / 512.0;
        assert!((mu - 1.984375f64).abs() < 1e-12);
    }

    #[test]
    fn zero_stream_fails() {
        let bits = BitStream::from_bits(&vec![0u8; 100_000], "zeros").unwrap();
        let r = non_overlapping_template(&bits, &[0, 0, 0, 0, 0, 0, 0, 0, 1], 8).unwrap();
        assert!(r.p_value < 0.01);
        assert_eq!(r.statistics["w0"], 0.0);
    }

    #[test]
    fn short_stream_rejected() {
        let bits = BitStream::from_bits(&[1; 100], "").unwrap();
        assert!(matches!(
            non_overlapping_template(&bits, &[0, 0, 1], 8),
            Err(Error::InsufficientData { needed: 192, .. })
        ));
    }
}
