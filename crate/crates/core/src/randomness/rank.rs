use super::{igamc, BitStream, PValueResult};
use crate::error::{Error, Result};

pub(super) const NAME: &str = "binary_matrix_rank";

/// Rank over GF(2) of a matrix whose rows are bit masks of width `cols`.
pub fn gf2_rank(rows: &mut [u64], cols: usize) -> usize {
    let mut rank = 0;
    for col in (0..cols).rev() {
        let bit = 1u64 << col;
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let p = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row & bit != 0 {
                *row ^= p;
            }
        }
        rank += 1;
    }
    rank
}

/// Probability that a random `m x q` GF(2) matrix has rank `r`.
fn rank_probability(r: usize, m: usize, q: usize) -> f64 {
    let exp = (r * (q + m - r)) as f64 - (m * q) as f64;
    let mut prod = 1.0;
    for i in 0..r {
        let i = i as f64;
        prod *= (1.0 - 2f64.powf(i - q as f64)) * (1.0 - 2f64.powf(i - m as f64)) / (1.0 - 2f64.powf(i - r as f64));
    }
    2f64.powf(exp) * prod
}

/// Probabilities of full rank, rank one less, and anything lower.
pub fn rank_probabilities(m: usize, q: usize) -> [f64; 3] {
    let full = m.min(q);
    let p_full = rank_probability(full, m, q);
    let p_minus = rank_probability(full - 1, m, q);
    [p_full, p_minus, 1.0 - p_full - p_minus]
}

pub fn binary_matrix_rank(bits: &BitStream, rows: usize, cols: usize) -> Result<PValueResult> {
    if rows < 2 || cols < 2 || cols > 64 {
        return Err(Error::Config(format!("matrix must be at least 2x2 and at most 64 columns wide, got {rows}x{cols}")));
    }
    let n = bits.len();
    let needed = 38 * rows * cols;
    if n < needed {
        return Err(Error::InsufficientData { test: NAME.into(), needed, got: n });
    }
    let per = rows * cols;
    let count = n / per;
    let full = rows.min(cols);
    let mut f = [0u64; 3];
    let mut buf = vec![0u64; rows];
    for k in 0..count {
        for (r, row) in buf.iter_mut().enumerate() {
            let start = k * per + r * cols;
            *row = (0..cols).fold(0u64, |acc, c| (acc << 1) | bits.bit(start + c) as u64);
        }
        match gf2_rank(&mut buf, cols) {
            r if r == full => f[0] += 1,
            r if r + 1 == full => f[1] += 1,
            _ => f[2] += 1,
        }
    }
    let probs = rank_probabilities(rows, cols);
    let nf = count as f64;
    let chi2: f64 = f.iter().zip(&probs).map(|(&o, &p)| (o as f64 - p * nf).powi(2) / (p * nf)).sum();
    let p = igamc(1.0, chi2 / 2.0);
    Ok(PValueResult::new(NAME, p)
        .param("rows", rows)
        .param("cols", cols)
        .stat("matrices", nf)
        .stat("full_rank", f[0] as f64)
        .stat("rank_minus_1", f[1] as f64)
        .stat("lower_rank", f[2] as f64)
        .stat("chi2", chi2))
}
