//! Resonance peak extraction from uniformly sampled scans.

use serde::{Deserialize, Serialize};

use super::DataSeries;
use crate::error::{Error, Result};

const SMOOTHING_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    /// Smoothed signal at the grid maximum.
    pub height: f64,
    /// Full width at half prominence.
    pub width: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// Sorted by center.
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn centers(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.center).collect()
    }

    /// The `n` most prominent peaks, re-sorted by center.
    pub fn most_prominent(&self, n: usize) -> PeakSet {
        let mut v = self.peaks.clone();
        v.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
        v.truncate(n);
        v.sort_by(|a, b| a.center.total_cmp(&b.center));
        PeakSet { peaks: v }
    }
}

fn smooth(y: &[f64]) -> Vec<f64> {
    let half = SMOOTHING_WINDOW / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Local maxima of the smoothed scan whose topographic prominence is at least
/// `min_prominence`, refined by a parabola through the three samples around each maximum.
pub fn find_peaks(scan: &DataSeries, min_prominence: f64) -> Result<PeakSet> {
    scan.validate()?;
    let n = scan.len();
    if n < 3 {
        return Ok(PeakSet::default());
    }
    let step = (scan.x[n - 1] - scan.x[0]) / (n - 1) as f64;
    if scan.x.windows(2).any(|w| ((w[1] - w[0]) / step - 1.0).abs() > 1e-6) {
        return Err(Error::constraint("scan", "frequency grid must be uniform"));
    }
    let s = smooth(&scan.y);
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if !(s[i] > s[i - 1]) {
            i += 1;
            continue;
        }
        // flat tops: take the middle of the plateau
        let mut j = i;
        while j + 1 < n && s[j + 1] == s[i] {
            j += 1;
        }
        if j + 1 >= n || s[j + 1] > s[i] {
            i = j + 1;
            continue;
        }
        let k = (i + j) / 2;
        let height = s[k];
        let mut left_min = height;
        for l in (0..i).rev() {
            if s[l] > height {
                break;
            }
            left_min = left_min.min(s[l]);
        }
        let mut right_min = height;
        for r in j + 1..n {
            if s[r] > height {
                break;
            }
            right_min = right_min.min(s[r]);
        }
        let prominence = height - left_min.max(right_min);
        if prominence >= min_prominence && prominence > 0.0 {
            let (y0, y1, y2) = (s[k - 1], s[k], s[k + 1]);
            let den = y0 - 2.0 * y1 + y2;
            let shift = if den < 0.0 { (0.5 * (y0 - y2) / den).clamp(-0.5, 0.5) } else { 0.0 };
            let center = scan.x[k] + shift * step;
            let level = height - 0.5 * prominence;
            let mut a = k;
            while a > 0 && s[a] > level {
                a -= 1;
            }
            let mut b = k;
            while b + 1 < n && s[b] > level {
                b += 1;
            }
            let cross = |lo: usize, hi: usize| {
                let (ya, yb) = (s[lo], s[hi]);
                if ya == yb {
                    scan.x[lo]
                } else {
                    scan.x[lo] + (level - ya) / (yb - ya) * (scan.x[hi] - scan.x[lo])
                }
            };
            let left = if s[a] <= level { cross(a, a + 1) } else { scan.x[a] };
            let right = if s[b] <= level { cross(b - 1, b) } else { scan.x[b] };
            peaks.push(Peak { center, height, width: right - left, prominence });
        }
        i = j + 1;
    }
    Ok(PeakSet { peaks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn lorentz(x: f64, c: f64, w: f64) -> f64 {
        let u = (x - c) / (0.5 * w);
        1.0 / (1.0 + u * u)
    }

    fn grid(a: f64, b: f64, step: f64) -> Vec<f64> {
        let n = ((b - a) / step).round() as usize + 1;
        (0..n).map(|i| a + i as f64 * step).collect()
    }

    #[test]
    fn two_lorentzians_split_by_hyperfine_interval() {
        let x = grid(0.5e9, 6.5e9, 1e6);
        let y: Vec<f64> = x.iter().map(|f| lorentz(*f, 3.0e9, 40e6) + 0.7 * lorentz(*f, 5.2095e9, 40e6)).collect();
        let peaks = find_peaks(&DataSeries::new(x, y), 0.1).unwrap();
        assert_eq!(peaks.peaks.len(), 2);
        let c = peaks.centers();
        assert!((c[1] - c[0] - 2.2095e9).abs() < 2e6);
        assert!((peaks.peaks[0].width - 40e6).abs() < 3e6);
    }

    #[test]
    fn flat_noise_has_no_peaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let x = grid(0.0, 999.0, 1.0);
        let y: Vec<f64> = x.iter().map(|_| 1.0 + normal.sample(&mut rng)).collect();
        assert!(find_peaks(&DataSeries::new(x, y), 0.05).unwrap().peaks.is_empty());
    }

    #[test]
    fn single_peak_within_one_step() {
        let x = grid(0.0, 200.0, 1.0);
        let y: Vec<f64> = x.iter().map(|f| lorentz(*f, 87.3, 9.0)).collect();
        let p = find_peaks(&DataSeries::new(x, y), 0.5).unwrap();
        assert_eq!(p.peaks.len(), 1);
        assert!((p.peaks[0].center - 87.3).abs() < 1.0);
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let s = DataSeries::new(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 1.0, 0.0, 0.0]);
        assert!(find_peaks(&s, 0.1).is_err());
    }

    #[test]
    fn centers_unbiased_over_noise_realizations() {
        let normal = Normal::new(0.0, 0.02).unwrap();
        let x = grid(0.0, 300.0, 1.0);
        let truth = 150.37;
        let mut sum = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = x.iter().map(|f| lorentz(*f, truth, 20.0) + normal.sample(&mut rng)).collect();
            let p = find_peaks(&DataSeries::new(x.clone(), y), 0.5).unwrap();
            assert_eq!(p.peaks.len(), 1);
            sum += p.peaks[0].center - truth;
        }
        assert!((sum / 100.0).abs() < 0.5);
    }
}
