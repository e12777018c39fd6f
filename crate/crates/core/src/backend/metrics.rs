//! Detection metrics over a set of scored trials.
//!
//! Both metrics sweep the same operating points: a trial is accepted when
//! its score is at least the threshold, and thresholds run over `-inf`,
//! every midpoint between consecutive distinct scores, and `+inf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Miss and false-alarm rates at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

fn check(target: &[f64], nontarget: &[f64]) -> Result<()> {
    if target.is_empty() || nontarget.is_empty() {
        return Err(Error::Metric(format!(
            "need both classes, got {} target and {} nontarget trials",
            target.len(),
            nontarget.len()
        )));
    }
    if target.iter().chain(nontarget).any(|s| !s.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    Ok(())
}

/// Every operating point in increasing threshold order.
pub fn operating_points(target: &[f64], nontarget: &[f64]) -> Result<Vec<OperatingPoint>> {
    check(target, nontarget)?;
    let mut all: Vec<(f64, bool)> = target
        .iter()
        .map(|s| (*s, true))
        .chain(nontarget.iter().map(|s| (*s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (target.len() as f64, nontarget.len() as f64);
    let mut misses = 0usize;
    let mut rejected_nontargets = 0usize;
    let mut points = vec![OperatingPoint {
        threshold: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_fa: 1.0,
    }];
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                misses += 1;
            } else {
                rejected_nontargets += 1;
            }
            i += 1;
        }
        let threshold = if i < all.len() {
            0.5 * (s + all[i].0)
        } else {
            f64::INFINITY
        };
        points.push(OperatingPoint {
            threshold,
            p_miss: misses as f64 / nt,
            p_fa: (nn - rejected_nontargets as f64) / nn,
        });
    }
    Ok(points)
}

/// Equal error rate, linearly interpolated between the two operating points
/// where `p_miss - p_fa` changes sign.
pub fn eer_from_scores(target: &[f64], nontarget: &[f64]) -> Result<Eer> {
    let points = operating_points(target, nontarget)?;
    let d = |p: &OperatingPoint| p.p_miss - p.p_fa;
    // d runs from -1 at -inf to +1 at +inf and never decreases
    let i = points
        .iter()
        .position(|p| d(p) >= 0.0)
        .expect("the last operating point has d = 1");
    let hi = points[i];
    if d(&hi) == 0.0 || i == 0 {
        return Ok(Eer {
            eer: hi.p_miss,
            threshold: finite_threshold(&points, i),
        });
    }
    let lo = points[i - 1];
    let alpha = -d(&lo) / (d(&hi) - d(&lo));
    let eer = lo.p_miss + alpha * (hi.p_miss - lo.p_miss);
    let (t0, t1) = (
        finite_threshold(&points, i - 1),
        finite_threshold(&points, i),
    );
    Ok(Eer {
        eer,
        threshold: t0 + alpha * (t1 - t0),
    })
}

/// Infinite end thresholds are reported as the nearest finite one.
fn finite_threshold(points: &[OperatingPoint], i: usize) -> f64 {
    let t = points[i].threshold;
    if t.is_finite() {
        return t;
    }
    let finite: Vec<f64> = points
        .iter()
        .map(|p| p.threshold)
        .filter(|t| t.is_finite())
        .collect();
    match (t > 0.0, finite.first(), finite.last()) {
        (false, Some(first), _) => *first,
        (true, _, Some(last)) => *last,
        _ => 0.0,
    }
}

/// Minimum normalised detection cost with unit costs:
/// `min (p_miss * p + p_fa * (1 - p)) / min(p, 1 - p)`.
pub fn min_dcf_from_scores(target: &[f64], nontarget: &[f64], p_target: f64) -> Result<f64> {
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(Error::Metric(format!("p_target {p_target} outside (0, 1)")));
    }
    let points = operating_points(target, nontarget)?;
    let norm = p_target.min(1.0 - p_target);
    Ok(points
        .iter()
        .map(|p| (p.p_miss * p_target + p.p_fa * (1.0 - p_target)) / norm)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated() {
        let e = eer_from_scores(&[2.0, 3.0], &[0.0, 1.0]).unwrap();
        assert_eq!(e.eer, 0.0);
        assert!(e.threshold > 1.0 && e.threshold < 2.0);
        assert_eq!(
            min_dcf_from_scores(&[2.0, 3.0], &[0.0, 1.0], 0.01).unwrap(),
            0.0
        );
    }

    #[test]
    fn identical_multisets() {
        let s = [0.1, 0.5, 0.5, 0.9];
        assert_eq!(eer_from_scores(&s, &s).unwrap().eer, 0.5);
    }

    #[test]
    fn constant_scores() {
        let e = eer_from_scores(&[1.0; 3], &[1.0; 5]).unwrap();
        assert_eq!(e.eer, 0.5);
        assert_eq!(
            min_dcf_from_scores(&[1.0; 3], &[1.0; 5], 0.01).unwrap(),
            1.0
        );
        assert_eq!(
            min_dcf_from_scores(&[1.0; 3], &[1.0; 5], 0.001).unwrap(),
            1.0
        );
    }

    #[test]
    fn reversed() {
        let e = eer_from_scores(&[0.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_eq!(e.eer, 1.0);
    }

    #[test]
    fn interpolated_crossing() {
        // points: (0,1) (0,.5) (.5,.5)... targets {1, 3}, nontargets {0, 2}
        let e = eer_from_scores(&[1.0, 3.0], &[0.0, 2.0]).unwrap();
        assert!((e.eer - 0.5).abs() < 1e-15);
        let e = eer_from_scores(&[1.0, 3.0, 4.0], &[0.0, 2.0]).unwrap();
        assert!(e.eer > 0.0 && e.eer < 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            eer_from_scores(&[], &[1.0]),
            Err(Error::Metric(_))
        ));
        assert!(eer_from_scores(&[f64::NAN], &[1.0]).is_err());
        assert!(min_dcf_from_scores(&[1.0], &[0.0], 0.0).is_err());
    }
}
