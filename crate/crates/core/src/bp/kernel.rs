//! Per-node message computations shared by the loopy engine and the exact
//! tree pass used by the oracle estimator.
//!
//! Every routine computes the leave-one-out outputs of a node for a range of
//! slots, and output `k` never reads input `k`. A caller that only needs one
//! outgoing message may therefore pass any placeholder in that slot.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::Pair;
use crate::error::{Error, Result};
use crate::graph::Label;
use crate::math::{ln, log_sum_exp};
use crate::prior::WorkerFactor;

/// Largest worker degree accepted by the exhaustive kernel.
pub const NAIVE_MAX_DEGREE: usize = 20;

/// How worker-to-task messages are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Magnetization form for discrete priors, count recursion otherwise.
    #[default]
    Auto,
    /// Expectation over prior atoms of a product of per-neighbor terms
    /// `(1 + A_j (2p - 1) x_j) / 2`. Discrete priors only. O(r) per message.
    Magnetization,
    /// Distribution of the number of matching neighbors, combined with the
    /// factor table. Any prior. O(r^2) per message.
    CountDp,
    /// Literal sum over all `2^(r-1)` neighbor label configurations.
    Naive,
}

impl Kernel {
    pub(crate) fn resolve(self, factor: &WorkerFactor) -> Result<Self> {
        match (self, factor.log_atoms().is_some()) {
            (Kernel::Auto, true) => Ok(Kernel::Magnetization),
            (Kernel::Auto, false) => Ok(Kernel::CountDp),
            (Kernel::Magnetization, false) => {
                Err(Error::param("the magnetization kernel needs a discrete prior"))
            }
            (k, _) => Ok(k),
        }
    }
}

/// Leave-one-out sums of task-side log-likelihood ratios.
///
/// `llrs[k]` is `ln m(+1) - ln m(-1)` of the k-th incoming worker message;
/// `out[k]` receives the message sent back along edge `k`.
pub(crate) fn task_outgoing(llrs: &[f64], out: &mut [Pair], suffix: &mut Vec<f64>) {
    let n = llrs.len();
    suffix.clear();
    suffix.resize(n + 1, 0.0);
    for k in (0..n).rev() {
        suffix[k] = llrs[k] + suffix[k + 1];
    }
    let mut prefix = 0.0;
    for k in 0..n {
        out[k] = Pair::from_llr(prefix + suffix[k + 1]);
        prefix += llrs[k];
    }
}

/// Working buffers reused across workers within a sweep.
#[derive(Default)]
pub(crate) struct Scratch {
    terms: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    counts: Vec<f64>,
    // per atom: (ln w, ln((1 + theta) / 2), ln((1 - theta) / 2))
    answer_terms: Vec<(f64, f64, f64)>,
}

/// Computes every worker-to-task message of one worker.
///
/// `answers[k]` and `incoming[k]` describe the k-th incident edge. On a
/// degenerate `(0, 0)` output the local slot index is returned as the error.
pub(crate) fn worker_outgoing(
    kernel: Kernel,
    factor: &WorkerFactor,
    answers: &[Label],
    incoming: &[Pair],
    out: &mut [Pair],
    scratch: &mut Scratch,
) -> core::result::Result<(), usize> {
    worker_outgoing_slots(kernel, factor, answers, incoming, out, 0..answers.len(), scratch)
}

/// Like [`worker_outgoing`] but only fills `out[k]` for `k` in `slots`.
pub(crate) fn worker_outgoing_slots(
    kernel: Kernel,
    factor: &WorkerFactor,
    answers: &[Label],
    incoming: &[Pair],
    out: &mut [Pair],
    slots: Range<usize>,
    scratch: &mut Scratch,
) -> core::result::Result<(), usize> {
    match kernel {
        Kernel::Magnetization | Kernel::Auto => {
            let atoms = factor.log_atoms().expect("kernel resolved against a discrete prior");
            magnetization(atoms, answers, incoming, out, slots, scratch)
        }
        Kernel::CountDp => count_dp(factor, answers, incoming, out, slots, scratch),
        Kernel::Naive => naive(factor, answers, incoming, out, slots),
    }
}

fn magnetization(
    atoms: &[(f64, f64)],
    answers: &[Label],
    incoming: &[Pair],
    out: &mut [Pair],
    slots: Range<usize>,
    s: &mut Scratch,
) -> core::result::Result<(), usize> {
    let r = answers.len();
    let n_atoms = atoms.len();
    s.answer_terms.clear();
    s.answer_terms
        .extend(atoms.iter().map(|&(lw, theta)| (lw, ln((1.0 + theta) / 2.0), ln((1.0 - theta) / 2.0))));
    // terms[a * r + j] = ln((1 + A_j theta_a x_j) / 2)
    s.terms.clear();
    for &(_, theta) in atoms {
        for j in 0..r {
            let x = incoming[j].magnetization();
            s.terms.push(ln((1.0 + answers[j].sign() * theta * x) / 2.0));
        }
    }
    s.prefix.clear();
    s.prefix.resize(n_atoms * (r + 1), 0.0);
    s.suffix.clear();
    s.suffix.resize(n_atoms * (r + 1), 0.0);
    for a in 0..n_atoms {
        let row = a * (r + 1);
        for j in 0..r {
            s.prefix[row + j + 1] = s.prefix[row + j] + s.terms[a * r + j];
        }
        for j in (0..r).rev() {
            s.suffix[row + j] = s.terms[a * r + j] + s.suffix[row + j + 1];
        }
    }
    for k in slots {
        let loo = |a: usize| s.prefix[a * (r + 1) + k] + s.suffix[a * (r + 1) + k + 1];
        // a +1 label agrees with the answer iff the answer is +1
        let pos_agrees = answers[k] == Label::Pos;
        let pick = |t: &(f64, f64, f64), agrees: bool| if agrees { t.1 } else { t.2 };
        let terms = &s.answer_terms;
        let log_pos = log_sum_exp(terms.iter().enumerate().map(|(a, t)| t.0 + pick(t, pos_agrees) + loo(a)));
        let log_neg = log_sum_exp(terms.iter().enumerate().map(|(a, t)| t.0 + pick(t, !pos_agrees) + loo(a)));
        out[k] = Pair::from_logs(log_pos, log_neg).ok_or(k)?;
    }
    Ok(())
}

fn count_dp(
    factor: &WorkerFactor,
    answers: &[Label],
    incoming: &[Pair],
    out: &mut [Pair],
    slots: Range<usize>,
    s: &mut Scratch,
) -> core::result::Result<(), usize> {
    let r = answers.len();
    let table = factor.table();
    for k in slots {
        // counts[c] = P(c of the other neighbors agree with their answers)
        s.counts.clear();
        s.counts.push(1.0);
        for j in (0..r).filter(|&j| j != k) {
            let agree = incoming[j].get(answers[j]);
            let disagree = incoming[j].get(answers[j].flip());
            s.counts.push(0.0);
            for c in (0..s.counts.len()).rev() {
                let keep = s.counts[c] * disagree;
                let add = if c > 0 { s.counts[c - 1] * agree } else { 0.0 };
                s.counts[c] = keep + add;
            }
        }
        let combine = |matches_k: bool| {
            log_sum_exp(s.counts.iter().enumerate().map(|(c, &w)| {
                if w == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ln(w) + table.get(c + usize::from(matches_k), r)
                }
            }))
        };
        let log_pos = combine(answers[k] == Label::Pos);
        let log_neg = combine(answers[k] == Label::Neg);
        out[k] = Pair::from_logs(log_pos, log_neg).ok_or(k)?;
    }
    Ok(())
}

fn naive(
    factor: &WorkerFactor,
    answers: &[Label],
    incoming: &[Pair],
    out: &mut [Pair],
    slots: Range<usize>,
) -> core::result::Result<(), usize> {
    let r = answers.len();
    assert!(r <= NAIVE_MAX_DEGREE, "naive kernel limited to degree {NAIVE_MAX_DEGREE}");
    let f: Vec<f64> = (0..=r).map(|c| factor.factor(c, r)).collect();
    let mut others = vec![0usize; r.saturating_sub(1)];
    for k in slots {
        let mut n = 0;
        for j in (0..r).filter(|&j| j != k) {
            others[n] = j;
            n += 1;
        }
        let mut pos = 0.0;
        let mut neg = 0.0;
        for config in 0u32..(1u32 << n) {
            let mut weight = 1.0;
            let mut matches = 0;
            for (bit, &j) in others[..n].iter().enumerate() {
                let label = if config >> bit & 1 == 1 { Label::Pos } else { Label::Neg };
                weight *= incoming[j].get(label);
                matches += usize::from(label == answers[j]);
            }
            let pos_matches = matches + usize::from(answers[k] == Label::Pos);
            let neg_matches = matches + usize::from(answers[k] == Label::Neg);
            pos += weight * f[pos_matches];
            neg += weight * f[neg_matches];
        }
        out[k] = Pair::from_weights(pos, neg).ok_or(k)?;
    }
    Ok(())
}

/// Sum of log-likelihood ratios that does not depend on input order:
/// positive and negative parts are each summed in ascending magnitude.
pub(crate) fn order_free_sum(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    buf.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let pos: f64 = buf.iter().filter(|v| **v > 0.0).sum();
    let neg: f64 = buf.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    pos - neg
}
