use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::EstimationError;
use crate::frame::Frame;

/// Two-group one-way ANOVA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// `+∞` when both groups have zero spread and different means.
    pub f_stat: f64,
    pub p_value: f64,
}

/// F test of equal means between samples of `(value, weight)` pairs, with
/// `p` from F(1, n−2).
///
/// Weights are rescaled to mean one across both groups, so with unit weights
/// this is the textbook pooled-variance test.
pub fn mean_equality_test(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<MeanTest, EstimationError> {
    if a.is_empty() || b.is_empty() {
        return Err(EstimationError::InvalidData("mean test needs two non-empty groups".into()));
    }
    let n = a.len() + b.len();
    if n < 3 {
        return Err(EstimationError::TooFewRows { rows: n, cols: 2 });
    }
    if a.iter().chain(b).any(|&(v, w)| !v.is_finite() || !w.is_finite() || w < 0.0) {
        return Err(EstimationError::InvalidData("non-finite value or negative weight".into()));
    }
    let total: f64 = a.iter().chain(b).map(|p| p.1).sum();
    if total <= 0.0 {
        return Err(EstimationError::InvalidData("weights sum to zero".into()));
    }
    let scale = n as f64 / total;
    let moments = |g: &[(f64, f64)]| -> Result<(f64, f64), EstimationError> {
        let wg: f64 = g.iter().map(|p| p.1 * scale).sum();
        if wg <= 0.0 {
            return Err(EstimationError::InvalidData("a group has zero total weight".into()));
        }
        Ok((wg, g.iter().map(|p| p.0 * p.1 * scale).sum::<f64>() / wg))
    };
    let (wa, ma) = moments(a)?;
    let (wb, mb) = moments(b)?;
    let grand = (wa * ma + wb * mb) / (wa + wb);
    let between = wa * (ma - grand).powi(2) + wb * (mb - grand).powi(2);
    let within: f64 = a
        .iter()
        .map(|&(v, w)| w * scale * (v - ma).powi(2))
        .chain(b.iter().map(|&(v, w)| w * scale * (v - mb).powi(2)))
        .sum();
    let df = (n - 2) as f64;
    let spread = between.max(within);
    let (f_stat, p_value) = if spread == 0.0 || between <= 1e-14 * spread {
        (0.0, 1.0)
    } else if within <= 1e-14 * spread {
        (f64::INFINITY, 0.0)
    } else {
        let f = between / (within / df);
        let dist = FisherSnedecor::new(1.0, df).expect("positive degrees of freedom");
        (f, dist.sf(f))
    };
    Ok(MeanTest {
        mean_a: ma,
        mean_b: mb,
        n_a: a.len(),
        n_b: b.len(),
        f_stat,
        p_value,
    })
}

/// Mean test of `variable` between rows with `group == 0` (a) and
/// `group == 1` (b); rows with a missing value are skipped.
pub fn mean_equality_test_frame(
    frame: &Frame,
    variable: &str,
    group: &str,
    weight: Option<&str>,
) -> Result<MeanTest, EstimationError> {
    for v in [Some(variable), Some(group), weight].into_iter().flatten() {
        frame
            .column(v)
            .map_err(|_| EstimationError::UnknownVariable(v.to_string()))?;
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..frame.nrows() {
        let w = match weight {
            Some(w) => frame.value(w, i),
            None => Some(1.0),
        };
        let (Some(v), Some(g), Some(w)) = (frame.value(variable, i), frame.value(group, i), w)
        else {
            continue;
        };
        if g == 0.0 {
            a.push((v, w));
        } else if g == 1.0 {
            b.push((v, w));
        } else {
            return Err(EstimationError::InvalidData(format!("`{group}` must be binary")));
        }
    }
    mean_equality_test(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn unit(v: &[f64]) -> Vec<(f64, f64)> {
        v.iter().map(|&x| (x, 1.0)).collect()
    }

    #[test]
    fn identical_groups() {
        let g = unit(&[1.0, 2.0, 3.0]);
        let t = mean_equality_test(&g, &g).unwrap();
        assert_eq!((t.f_stat, t.p_value), (0.0, 1.0));
    }

    #[test]
    fn degenerate_separation() {
        let t = mean_equality_test(&unit(&[0.0, 0.0]), &unit(&[1.0, 1.0])).unwrap();
        assert!(t.f_stat.is_infinite());
        assert!(t.p_value < 1e-12);
        let t = mean_equality_test(&unit(&[2.0, 2.0]), &unit(&[2.0])).unwrap();
        assert_eq!((t.f_stat, t.p_value), (0.0, 1.0));
    }

    #[test]
    fn equals_squared_pooled_t() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let b = [3.0, 5.0, 6.0];
        let t = mean_equality_test(&unit(&a), &unit(&b)).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| v.iter().map(|x| (x - mean(v)).powi(2)).sum::<f64>();
        let sp2 = (ss(&a) + ss(&b)) / 5.0;
        let tstat = (mean(&a) - mean(&b)) / (sp2 * (1.0 / 4.0 + 1.0 / 3.0)).sqrt();
        assert!((t.f_stat - tstat * tstat).abs() < 1e-12);
    }

    #[test]
    fn integer_weights_match_replication() {
        let weighted = mean_equality_test(&[(1.0, 2.0), (3.0, 1.0)], &[(2.0, 1.0), (5.0, 1.0)]).unwrap();
        let replicated = mean_equality_test(&unit(&[1.0, 1.0, 3.0]), &unit(&[2.0, 5.0])).unwrap();
        assert!((weighted.mean_a - replicated.mean_a).abs() < 1e-15);
        assert!((weighted.mean_b - replicated.mean_b).abs() < 1e-15);
    }

    #[test]
    fn size_under_the_null() {
        let mut rejections = 0;
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |n| -> Vec<(f64, f64)> {
                (0..n).map(|_| (StandardNormal.sample(&mut rng), 1.0)).collect()
            };
            let (a, b) = (draw(500), draw(500));
            if mean_equality_test(&a, &b).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 400.0;
        assert!((0.025..=0.08).contains(&rate), "{rate}");
    }

    #[test]
    fn frame_variant() {
        let mut f = Frame::new(5);
        f.insert("v", vec![Some(1.0), Some(2.0), None, Some(4.0), Some(5.0)]).unwrap();
        f.insert_dense("g", vec![0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let t = mean_equality_test_frame(&f, "v", "g", None).unwrap();
        assert_eq!((t.n_a, t.n_b), (2, 2));
        assert!((t.mean_b - 4.5).abs() < 1e-15);
        assert!(mean_equality_test_frame(&f, "nope", "g", None).is_err());
    }
}
