use super::{BinaryMask, GrayImage, ImageError};

/// Intensity histogram with the class moments for every split point.
///
/// For a split `t`, class 0 holds levels `0..t` and class 1 holds `t..bins`.
/// All per-split vectors have `bins` entries indexed by `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
    p: Vec<f64>,
    omega0: Vec<f64>,
    omega1: Vec<f64>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    mu_total: f64,
    between: Vec<f64>,
    within: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Per-level probability `p(i)`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn omega0(&self) -> &[f64] {
        &self.omega0
    }

    pub fn omega1(&self) -> &[f64] {
        &self.omega1
    }

    /// Class-0 mean per split; 0 when the class is empty.
    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    /// Class-1 mean per split; 0 when the class is empty.
    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }

    pub fn mu_total(&self) -> f64 {
        self.mu_total
    }

    /// Between-class variance `w0 * w1 * (mu0 - mu1)^2` per split.
    pub fn between_class_variance(&self) -> &[f64] {
        &self.between
    }

    /// Within-class variance per split (`total variance - between`).
    pub fn within_class_variance(&self) -> &[f64] {
        &self.within
    }

    pub fn populated_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

pub fn compute_histogram(g: &GrayImage) -> Histogram {
    let bins = g.bins();
    let mut counts = vec![0u64; bins];
    for &v in g.data() {
        counts[v as usize] += 1;
    }
    let total = g.data().len() as u64;
    let n = total.max(1) as f64;
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let mu_total: f64 = p.iter().enumerate().map(|(i, pi)| i as f64 * pi).sum();
    let variance: f64 = p
        .iter()
        .enumerate()
        .map(|(i, pi)| (i as f64 - mu_total).powi(2) * pi)
        .sum();

    let mut omega0 = Vec::with_capacity(bins);
    let mut omega1 = Vec::with_capacity(bins);
    let mut mu0 = Vec::with_capacity(bins);
    let mut mu1 = Vec::with_capacity(bins);
    let mut between = Vec::with_capacity(bins);
    let mut within = Vec::with_capacity(bins);

    // Running sums over class 0, updated one level at a time.
    let mut w0 = 0.0;
    let mut m0 = 0.0;
    for t in 0..bins {
        if t > 0 {
            w0 += p[t - 1];
            m0 += (t - 1) as f64 * p[t - 1];
        }
        let w1 = 1.0 - w0;
        let (u0, u1) = class_means(w0, m0, w1, mu_total - m0);
        let sb = if w0 > 0.0 && w1 > 0.0 {
            w0 * w1 * (u0 - u1) * (u0 - u1)
        } else {
            0.0
        };
        omega0.push(w0);
        omega1.push(w1);
        mu0.push(u0);
        mu1.push(u1);
        between.push(sb);
        within.push((variance - sb).max(0.0));
    }

    Histogram {
        counts,
        total,
        p,
        omega0,
        omega1,
        mu0,
        mu1,
        mu_total,
        between,
        within,
    }
}

fn class_means(w0: f64, m0: f64, w1: f64, m1: f64) -> (f64, f64) {
    let u0 = if w0 > 0.0 { m0 / w0 } else { 0.0 };
    let u1 = if w1 > 0.0 { m1 / w1 } else { 0.0 };
    (u0, u1)
}

/// Otsu threshold: the smallest split `t` maximizing the between-class
/// variance.
///
/// The sweep carries integer class counts and first moments so candidate
/// splits are compared exactly; `(N*M0 - n0*MT)^2 / (n0*n1)` is proportional
/// to the between-class variance.
pub fn otsu_threshold(h: &Histogram) -> Result<u32, ImageError> {
    if h.populated_bins() < 2 {
        return Err(ImageError::DegenerateImage);
    }
    let n = h.total as i128;
    let moment_total: i128 = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as i128 * c as i128)
        .sum();

    let mut best: Option<(usize, Score)> = None;
    let mut n0: i128 = 0;
    let mut m0: i128 = 0;
    for t in 1..h.bins() {
        n0 += h.counts[t - 1] as i128;
        m0 += (t - 1) as i128 * h.counts[t - 1] as i128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = n * m0 - n0 * moment_total;
        let score = Score {
            num: diff.unsigned_abs(),
            den: (n0 * n1) as u128,
        };
        match &best {
            Some((_, b)) if !score.greater_than(b) => {}
            _ => best = Some((t, score)),
        }
    }
    best.map(|(t, _)| t as u32).ok_or(ImageError::DegenerateImage)
}

/// `num^2 / den` kept as integers.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn greater_than(&self, other: &Score) -> bool {
        // num_a^2 * den_b > num_b^2 * den_a
        let lhs = self
            .num
            .checked_mul(self.num)
            .and_then(|v| v.checked_mul(other.den));
        let rhs = other
            .num
            .checked_mul(other.num)
            .and_then(|v| v.checked_mul(self.den));
        match (lhs, rhs) {
            (Some(l), Some(r)) => l > r,
            _ => {
                let l = (self.num as f64).powi(2) / self.den as f64;
                let r = (other.num as f64).powi(2) / other.den as f64;
                l > r
            }
        }
    }
}

/// Foreground iff `intensity >= t`.
pub fn binarize(g: &GrayImage, t: u32) -> BinaryMask {
    BinaryMask::new(
        g.height(),
        g.width(),
        g.data().iter().map(|&v| v >= t).collect(),
    )
    .expect("dimensions come from a valid gray image")
}
