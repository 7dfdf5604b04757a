use super::{erfc, BitStream, PValueResult};
use crate::error::{Error, Result};

pub(super) const NAME: &str = "random_excursions_variant";

/// Below this many cycles the normal approximation is unreliable.
pub const MIN_CYCLES: u64 = 500;

pub const EXCURSION_STATES: [i64; 18] = [-9, -8, -7, -6, -5, -4, -3, -2, -1, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Visits of the ±1 random walk to each state in -9..=9 against the number
/// of cycles `J`.
///
/// One p-value per state goes into `p_values`. The verdict uses the
/// Bonferroni-adjusted family p-value `min(1, 18 * min_p)`, so the test as a
/// whole keeps its nominal false-failure rate; `min_p` is reported as well.
pub fn random_excursions_variant(bits: &BitStream) -> Result<PValueResult> {
    let mut s: i64 = 0;
    let mut zeros: u64 = 0;
    let mut visits = [0u64; 19];
    for b in bits.bits() {
        s += if b == 1 { 1 } else { -1 };
        if s == 0 {
            zeros += 1;
        }
        if (-9..=9).contains(&s) {
            visits[(s + 9) as usize] += 1;
        }
    }
    if zeros == 0 {
        return Err(Error::NoCycles);
    }
    // The walk is closed with an appended zero, which ends one more cycle
    // unless it already ended at the origin.
    let j = zeros + u64::from(s != 0);
    let jf = j as f64;
    let p_values: Vec<f64> = EXCURSION_STATES
        .iter()
        .map(|&x| {
            let xi = visits[(x + 9) as usize] as f64;
            erfc((xi - jf).abs() / (2.0 * jf * (4.0 * x.unsigned_abs() as f64 - 2.0)).sqrt())
        })
        .collect();
    let min_p = p_values.iter().copied().fold(1.0, f64::min);
    let family = (min_p * EXCURSION_STATES.len() as f64).min(1.0);
    let mut r = PValueResult::new(NAME, family).stat("cycles", jf).stat("min_p", min_p);
    for &x in &EXCURSION_STATES {
        r = r.stat(&format!("visits[{x}]"), visits[(x + 9) as usize] as f64);
    }
    r.p_values = p_values;
    if j < MIN_CYCLES {
        r.warnings.push(format!("only {j} cycles (fewer than {MIN_CYCLES}); p-values are approximate"));
    }
    Ok(r.param("states", "-9..-1,1..9").param("adjustment", "bonferroni"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_walk() {
        let bits: Vec<u8> = (0..2000).map(|i| (i % 2) as u8).collect();
        let r = random_excursions_variant(&BitStream::from_bits(&bits, "").unwrap()).unwrap();
        assert_eq!(r.statistics["cycles"], 1000.0);
        assert_eq!(r.statistics["visits[-1]"], 1000.0);
        assert_eq!(r.statistics["visits[1]"], 0.0);
        // State -1 is visited exactly J times.
        assert_eq!(r.p_values[8], 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn zero_stream_has_no_cycles() {
        let bits = BitStream::from_bits(&vec![0u8; 4096], "").unwrap();
        assert!(matches!(random_excursions_variant(&bits), Err(Error::NoCycles)));
    }
}
