//! Adversarial objectives.
//!
//! The generator minimizes `ln(1 - D(G(x)))` (or `-ln D(G(x))` in the
//! non-saturating variant); the discriminator minimizes
//! `-[ln D(y) + ln(1 - D(G(x)))]`. Scores are clamped to `[1e-7, 1 - 1e-7]`.

use crate::error::Result;
use crate::tensor::{Scalar, Tape, Var};
use serde::{Deserialize, Serialize};

pub const SCORE_CLAMP: f64 = 1e-7;

fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

pub fn g_loss(d_score_fake: f64, non_saturating: bool) -> f64 {
    let s = clamp_score(d_score_fake);
    if non_saturating {
        -s.ln()
    } else {
        (1.0 - s).ln()
    }
}

pub fn d_loss(d_score_real: f64, d_score_fake: f64) -> f64 {
    -(clamp_score(d_score_real).ln() + (1.0 - clamp_score(d_score_fake)).ln())
}

/// Losses of one training iteration. `l_total = l_g + l_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    pub l_g: f64,
    pub l_d: f64,
    pub l_total: f64,
}

impl GanLosses {
    pub fn new(l_g: f64, l_d: f64) -> Self {
        Self { l_g, l_d, l_total: l_g + l_d }
    }

    pub fn is_finite(&self) -> bool {
        self.l_g.is_finite() && self.l_d.is_finite() && self.l_total.is_finite()
    }
}

/// Batch-mean generator loss on tape, from per-sample fake scores `[N]`.
pub fn g_loss_on_tape<T: Scalar>(tape: &mut Tape<T>, fake_scores: Var, non_saturating: bool) -> Result<Var> {
    let eps = T::from_f64_lossy(SCORE_CLAMP);
    if non_saturating {
        let l = tape.log_prob(fake_scores, false, eps)?;
        let m = tape.mean(l)?;
        tape.scale(m, -T::one())
    } else {
        let l = tape.log_prob(fake_scores, true, eps)?;
        tape.mean(l)
    }
}

/// Batch-mean discriminator loss on tape.
pub fn d_loss_on_tape<T: Scalar>(tape: &mut Tape<T>, real_scores: Var, fake_scores: Var) -> Result<Var> {
    let eps = T::from_f64_lossy(SCORE_CLAMP);
    let lr = tape.log_prob(real_scores, false, eps)?;
    let lf = tape.log_prob(fake_scores, true, eps)?;
    let mr = tape.mean(lr)?;
    let mf = tape.mean(lf)?;
    let s = tape.add(mr, mf)?;
    tape.scale(s, -T::one())
}
