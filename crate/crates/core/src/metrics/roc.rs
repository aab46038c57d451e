use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `≥ threshold` count as positive; the first point uses `+∞`.
    pub threshold: f64,
}

/// ROC points over every distinct score, descending, starting at `(0, 0)`
/// and ending at `(1, 1)`. Equal scores move the curve in one step.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != positive.len() {
        return Err(invalid(format!("{} scores but {} labels", scores.len(), positive.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(invalid(format!("non-finite score {s}")));
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(invalid(format!(
            "ROC needs both classes present, got {p} positive and {n} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold: t,
        });
    }
    Ok(points)
}

/// Trapezoid area under a point list ordered by non-decreasing fpr.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Mean of the defined per-class values.
pub fn macro_auc(per_class: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concordance(scores: &[f64], positive: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in positive.iter().enumerate() {
            for (j, &pj) in positive.iter().enumerate() {
                if pi && !pj {
                    pairs += 1.0;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn four_sample_fixture() {
        let s = [0.9, 0.4, 0.6, 0.1];
        let l = [true, true, false, false];
        let pts = roc_curve(&s, &l).unwrap();
        assert_eq!(auc(&pts), 0.75);
        assert_eq!(concordance(&s, &l), 0.75);
        assert_eq!(pts.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(pts.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn separated_and_tied() {
        let l = [true, true, false, false, false];
        assert_eq!(auc(&roc_curve(&[0.9, 0.8, 0.3, 0.2, 0.1], &l).unwrap()), 1.0);
        let tied = roc_curve(&[0.5; 5], &l).unwrap();
        assert_eq!(tied.len(), 2);
        assert_eq!(auc(&tied), 0.5);
    }

    #[test]
    fn monotone_and_matches_concordance() {
        let mut rng = crate::Rng::new(11);
        for _ in 0..100 {
            let n = 2 + rng.below(60);
            let mut l: Vec<bool> = (0..n).map(|_| rng.unit() < 0.4).collect();
            l[0] = true;
            l[1] = false;
            let s: Vec<f64> = (0..n).map(|_| (rng.below(7) as f64) / 6.0).collect();
            let pts = roc_curve(&s, &l).unwrap();
            assert!(pts.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
            assert!((auc(&pts) - concordance(&s, &l)).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_class_rejected() {
        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_curve(&[0.1, 0.2], &[false, false]).is_err());
        assert!(roc_curve(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn macro_skips_undefined() {
        assert_eq!(macro_auc(&[Some(1.0), None, Some(0.5)]), Some(0.75));
        assert_eq!(macro_auc(&[None]), None);
    }
}
