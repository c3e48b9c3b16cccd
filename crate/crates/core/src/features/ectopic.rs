//! Percentage-deviation ectopic beat detection.

use crate::error::{Error, Result};

/// Flags beats that deviate from the running mean of recent accepted beats.
///
/// The first `ref_beats` intervals seed the reference and are assumed
/// normal. Beat `i` is ectopic when `|rr[i] - m| > threshold * m`, where `m`
/// is the mean of the last `ref_beats` non-ectopic intervals before `i`.
pub fn detect_ectopic(intervals: &[f64], threshold: f64, ref_beats: usize) -> Result<Vec<bool>> {
    if ref_beats == 0 || intervals.len() < ref_beats + 1 {
        return Err(Error::TooShort {
            what: "ectopic filtering",
            needed: ref_beats + 1,
            available: intervals.len(),
        });
    }
    let mut mask = vec![false; intervals.len()];
    let mut accepted: std::collections::VecDeque<f64> = intervals[..ref_beats].iter().copied().collect();

    for (i, &rr) in intervals.iter().enumerate().skip(ref_beats) {
        let reference = accepted.iter().sum::<f64>() / ref_beats as f64;
        if (rr - reference).abs() > threshold * reference {
            mask[i] = true;
        } else {
            accepted.pop_front();
            accepted.push_back(rr);
        }
    }
    Ok(mask)
}

/// Intervals whose mask entry is false.
pub fn remove_flagged(intervals: &[f64], mask: &[bool]) -> Vec<f64> {
    intervals
        .iter()
        .zip(mask)
        .filter(|(_, &ectopic)| !ectopic)
        .map(|(&rr, _)| rr)
        .collect()
}
