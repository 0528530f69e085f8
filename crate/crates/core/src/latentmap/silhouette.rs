use rayon::prelude::*;

use crate::error::{Error, Result};

fn dist<P: AsRef<[f64]>>(a: &P, b: &P) -> f64 {
    a.as_ref()
        .iter()
        .zip(b.as_ref())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette coefficient with Euclidean distance. Points alone in
/// their cluster score 0.
pub fn silhouette<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Shape {
            expected: points.len(),
            got: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidParam(
            "silhouette needs at least two clusters".into(),
        ));
    }

    let scores: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if counts[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[labels[j]] += dist(&points[i], p);
                }
            }
            let a = sums[own] / (counts[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && counts[c] > 0)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_value() {
        // Two clusters on a line: {0, 1} and {5}.
        let pts = [[0.0], [1.0], [5.0]];
        // s0: a=1, b=5 → 0.8; s1: a=1, b=4 → 0.75; s2 singleton → 0.
        let s = silhouette(&pts, &[0, 0, 1]).unwrap();
        assert!((s - (0.8 + 0.75) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn separated_near_one_and_single_cluster_rejected() {
        let pts: Vec<[f64; 2]> = (0..20)
            .map(|i| [if i < 10 { 0.0 } else { 100.0 }, (i % 10) as f64 * 0.01])
            .collect();
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        assert!(silhouette(&pts, &labels).unwrap() > 0.99);
        assert!(silhouette(&pts, &[0; 20]).is_err());
    }
}
