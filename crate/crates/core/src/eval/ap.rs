/// Recall grid of the interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// One scored detection pooled across images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub true_positive: bool,
}

/// 101-point interpolated AP; `None` when there is no ground truth.
///
/// Entries are ranked by descending score. Entries sharing a score form a
/// single point of the precision/recall curve, so their relative order
/// never matters. Precision is replaced by its envelope (maximum over
/// higher recall) and sampled at recall `0, 0.01, ..., 1`.
pub fn average_precision(scored: &[Scored], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .score
            .partial_cmp(&scored[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut precision = Vec::with_capacity(order.len());
    let mut recall = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        if scored[i].true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = order.get(pos + 1).is_none_or(|&n| scored[n].score != scored[i].score);
        if group_ends {
            precision.push(tp as f64 / (tp + fp) as f64);
            recall.push(tp as f64 / num_gt as f64);
        }
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut total = 0.0;
    let mut j = 0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        while j < recall.len() && recall[j] < r {
            j += 1;
        }
        if j < recall.len() {
            total += precision[j];
        }
    }
    Some(total / RECALL_POINTS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(score: f64, tp: bool) -> Scored {
        Scored {
            score,
            true_positive: tp,
        }
    }

    #[test]
    fn perfect_detector() {
        assert_eq!(average_precision(&[s(0.9, true), s(0.3, true)], 2), Some(1.0));
    }

    #[test]
    fn false_positive_first() {
        let ap = average_precision(&[s(0.9, false), s(0.8, true)], 1).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tied_scores_form_one_point() {
        let a = average_precision(&[s(0.5, true), s(0.5, false)], 1).unwrap();
        let b = average_precision(&[s(0.5, false), s(0.5, true)], 1).unwrap();
        assert_eq!(a, b);
        assert!((a - 0.5).abs() < 1e-12);
    }

    #[test]
    fn undefined_without_ground_truth() {
        assert_eq!(average_precision(&[s(0.9, false)], 0), None);
        assert_eq!(average_precision(&[], 3), Some(0.0));
    }
}
