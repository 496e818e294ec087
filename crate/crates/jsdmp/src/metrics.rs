//! Classification metrics: accuracy and normalized mutual information.

use crate::error::{Error, Result};

/// Fraction of masked nodes whose prediction equals the label.
pub fn accuracy(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    check_lengths(pred, truth, mask)?;
    let mut hit = 0usize;
    let mut total = 0usize;
    for i in 0..pred.len() {
        if mask[i] {
            total += 1;
            if pred[i] == truth[i] {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Config("accuracy: mask selects no nodes".into()));
    }
    Ok(hit as f64 / total as f64)
}

/// Normalized mutual information `2 I(Y; P) / (H(Y) + H(P))` with natural
/// logarithms, computed over the masked nodes.
///
/// Degenerate partitions are pinned rather than left to 0/0: if both sides
/// collapse to a single cluster the partitions are identical and the score is
/// 1; if only one side collapses the score is 0.
pub fn nmi(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    check_lengths(pred, truth, mask)?;
    let pairs: Vec<(usize, usize)> = (0..pred.len())
        .filter(|&i| mask[i])
        .map(|i| (truth[i], pred[i]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Config("nmi: mask selects no nodes".into()));
    }
    let rt = pairs.iter().map(|&(t, _)| t).max().unwrap() + 1;
    let rp = pairs.iter().map(|&(_, p)| p).max().unwrap() + 1;
    let mut counts = vec![0usize; rt * rp];
    for &(t, p) in &pairs {
        counts[t * rp + p] += 1;
    }
    Ok(nmi_from_contingency(&counts, rt, rp))
}

/// NMI of a contingency table with `rt` truth rows and `rp` prediction
/// columns, stored row-major.
pub fn nmi_from_contingency(counts: &[usize], rt: usize, rp: usize) -> f64 {
    let n: usize = counts.iter().sum();
    let nf = n as f64;
    let row: Vec<usize> = (0..rt)
        .map(|t| counts[t * rp..(t + 1) * rp].iter().sum())
        .collect();
    let col: Vec<usize> = (0..rp)
        .map(|p| (0..rt).map(|t| counts[t * rp + p]).sum())
        .collect();
    let entropy = |marginal: &[usize]| -> f64 {
        marginal
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let q = c as f64 / nf;
                -q * q.ln()
            })
            .sum()
    };
    let ht = entropy(&row);
    let hp = entropy(&col);
    if ht == 0.0 && hp == 0.0 {
        return 1.0;
    }
    if ht == 0.0 || hp == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for t in 0..rt {
        for p in 0..rp {
            let c = counts[t * rp + p];
            if c == 0 {
                continue;
            }
            let joint = c as f64 / nf;
            mi += joint * (joint / (row[t] as f64 / nf * col[p] as f64 / nf)).ln();
        }
    }
    let mi = mi.max(0.0);
    (2.0 * mi / (ht + hp)).clamp(0.0, 1.0)
}

fn check_lengths(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<()> {
    if pred.len() != truth.len() || pred.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "metrics: {} predictions, {} labels, {} mask entries",
            pred.len(),
            truth.len(),
            mask.len()
        )));
    }
    Ok(())
}
