//! Black-box membership inference from per-sample losses.
//!
//! The attacker is a single loss threshold chosen to maximize balanced
//! accuracy between a member sample and a non-member sample. Candidate
//! thresholds are the gaps between consecutive distinct calibration losses.
//! Among optimal gaps, consecutive ones are merged into intervals and the
//! lowest interval wins; the reported threshold is its midpoint.
//!
//! Classification is by rank against the calibration losses: a probe is a
//! member when it falls on the member side of the optimal interval, and
//! probes strictly inside the interval count as non-members. Any strictly
//! increasing rescaling of all losses therefore leaves every decision
//! unchanged.

use crate::error::{Error, Result};
use crate::nnkit::Model;
use crate::speechgen::TaskData;
use crate::unlearn::per_sample_losses;

/// Which side of the threshold is labelled "member".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Low loss means member (the usual case).
    LowLossMember,
    HighLossMember,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiaAttacker {
    pub threshold: f64,
    pub orientation: Orientation,
    /// Balanced accuracy on the calibration data, in percent.
    pub balanced_accuracy: f64,
    pub member_mean_loss: f64,
    pub nonmember_mean_loss: f64,
    /// Member-side end of the optimal interval. `None` when the optimal
    /// split puts every calibration loss on the non-member side.
    member_bound: Option<f64>,
}

impl MiaAttacker {
    /// Calibrates on member and non-member losses.
    pub fn calibrate(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<Self> {
        if member_losses.is_empty() {
            return Err(Error::EmptySet("member calibration set"));
        }
        if nonmember_losses.is_empty() {
            return Err(Error::EmptySet("non-member calibration set"));
        }
        if member_losses.iter().chain(nonmember_losses).any(|l| l.is_nan()) {
            return Err(Error::invalid("losses", "NaN loss in calibration data"));
        }
        let m = member_losses.len() as u128;
        let n = nonmember_losses.len() as u128;

        // distinct values with (members, non-members) at each
        let mut tagged: Vec<(f64, bool)> = member_losses
            .iter()
            .map(|&l| (l, true))
            .chain(nonmember_losses.iter().map(|&l| (l, false)))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, u128, u128)> = Vec::new();
        for (l, is_member) in tagged {
            match groups.last_mut() {
                Some(g) if g.0 == l => {
                    if is_member {
                        g.1 += 1
                    } else {
                        g.2 += 1
                    }
                }
                _ => groups.push((l, u128::from(is_member), u128::from(!is_member))),
            }
        }

        // cut c puts groups[..c] on the low side; score is 2·m·n·BA for
        // the low-loss-member orientation
        let cuts = groups.len() + 1;
        let mut low_scores = Vec::with_capacity(cuts);
        let (mut members_low, mut nonmembers_low) = (0u128, 0u128);
        for c in 0..cuts {
            if c > 0 {
                members_low += groups[c - 1].1;
                nonmembers_low += groups[c - 1].2;
            }
            low_scores.push(members_low * n + (n - nonmembers_low) * m);
        }
        let total = 2 * m * n;
        let best_low = *low_scores.iter().max().unwrap();
        let best_high = total - *low_scores.iter().min().unwrap();
        let (orientation, scores): (Orientation, Vec<u128>) = if best_high > best_low {
            (
                Orientation::HighLossMember,
                low_scores.iter().map(|s| total - s).collect(),
            )
        } else {
            (Orientation::LowLossMember, low_scores)
        };
        let best = *scores.iter().max().unwrap();
        let first = scores.iter().position(|&s| s == best).unwrap();
        let mut last = first;
        while last + 1 < cuts && scores[last + 1] == best {
            last += 1;
        }
        // interval spans from the value below the first optimal cut to the
        // value above the last one
        let lower = first.checked_sub(1).map(|i| groups[i].0);
        let upper = groups.get(last).map(|g| g.0);
        let threshold = match (lower, upper) {
            (Some(a), Some(b)) => a + (b - a) / 2.0,
            (None, Some(b)) => b - 1.0,
            (Some(a), None) => a + 1.0,
            // every split ties: nothing is called a member
            (None, None) => groups[0].0 - 1.0,
        };
        let member_bound = match orientation {
            Orientation::LowLossMember => lower,
            Orientation::HighLossMember => upper,
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Ok(Self {
            threshold,
            orientation,
            balanced_accuracy: 100.0 * best as f64 / total as f64,
            member_mean_loss: mean(member_losses),
            nonmember_mean_loss: mean(nonmember_losses),
            member_bound,
        })
    }

    pub fn is_member(&self, loss: f64) -> bool {
        match (self.orientation, self.member_bound) {
            (_, None) => false,
            (Orientation::LowLossMember, Some(b)) => loss <= b,
            (Orientation::HighLossMember, Some(b)) => loss >= b,
        }
    }

    /// Percentage of `losses` classified as non-members.
    pub fn nonmember_rate(&self, losses: &[f64]) -> Result<f64> {
        if losses.is_empty() {
            return Err(Error::EmptySet("probe set"));
        }
        let non = losses.iter().filter(|&&l| !self.is_member(l)).count();
        Ok(100.0 * non as f64 / losses.len() as f64)
    }

    /// Balanced accuracy (percent) of this attacker's decisions on labelled
    /// member / non-member losses.
    pub fn balanced_accuracy_on(&self, members: &[f64], nonmembers: &[f64]) -> Result<f64> {
        let tpr = 100.0 - self.nonmember_rate(members)?;
        let tnr = self.nonmember_rate(nonmembers)?;
        Ok((tpr + tnr) / 2.0)
    }
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    let mut b = b.to_vec();
    b.sort_unstable();
    a.iter().all(|x| b.binary_search(x).is_err())
}

/// Calibrates an attacker on `model`'s losses: `member_ids` (from D_r) are
/// members, `nonmember_ids` (from D_t) non-members.
pub fn calibrate_mia(
    model: &Model,
    data: &TaskData,
    member_ids: &[usize],
    nonmember_ids: &[usize],
) -> Result<MiaAttacker> {
    if member_ids.is_empty() {
        return Err(Error::EmptySet("member calibration set"));
    }
    if nonmember_ids.is_empty() {
        return Err(Error::EmptySet("non-member calibration set"));
    }
    if !disjoint(member_ids, nonmember_ids) {
        return Err(Error::invalid("calibration sets", "member and non-member ids overlap"));
    }
    MiaAttacker::calibrate(
        &per_sample_losses(model, data, member_ids)?,
        &per_sample_losses(model, data, nonmember_ids)?,
    )
}

/// Percentage of the forget set the attacker labels non-member; higher
/// means the model keeps fewer traces of D_f.
pub fn mia_score(attacker: &MiaAttacker, model: &Model, data: &TaskData, forget_ids: &[usize]) -> Result<f64> {
    if forget_ids.is_empty() {
        return Err(Error::EmptySet("forget set"));
    }
    attacker.nonmember_rate(&per_sample_losses(model, data, forget_ids)?)
}
