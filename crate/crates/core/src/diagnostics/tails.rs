//! Empirical tail probabilities of the normalized statistics relative to
//! the Gaussian tail.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::ReplicaSampleSet;
use crate::stats::{normal_quantile, normal_sf, wilson_interval};

/// A grid point needs this many expected Gaussian exceedances.
pub const MIN_EXPECTED_HITS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailStatistic {
    #[serde(rename = "W")]
    W,
    #[serde(rename = "-W")]
    NegW,
    #[serde(rename = "S")]
    S,
    #[serde(rename = "-S")]
    NegS,
}

impl TailStatistic {
    pub const ALL: [TailStatistic; 4] = [Self::W, Self::NegW, Self::S, Self::NegS];

    pub fn label(self) -> &'static str {
        match self {
            Self::W => "W",
            Self::NegW => "-W",
            Self::S => "S",
            Self::NegS => "-S",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub statistic: TailStatistic,
    pub x: f64,
    pub hits: u64,
    pub p_emp: f64,
    pub p_gauss: f64,
    pub ratio: f64,
    /// 95% Wilson interval for `p_emp`, divided by `p_gauss`.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_effective: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRatioTable {
    pub xs: Vec<f64>,
    pub rows: Vec<TailRow>,
}

impl TailRatioTable {
    pub const CSV_HEADER: &'static str = "statistic,x,p_emp,p_gauss,ratio,ci_lo,ci_hi,n_effective";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.statistic.label(),
                r.x,
                r.p_emp,
                r.p_gauss,
                r.ratio,
                r.ci_lo,
                r.ci_hi,
                r.n_effective
            ));
        }
        out
    }

    pub fn get(&self, statistic: TailStatistic, x: f64) -> Option<&TailRow> {
        self.rows.iter().find(|r| r.statistic == statistic && r.x == x)
    }

    /// Rows whose ratio lies outside `[lo, hi]`.
    pub fn outside(&self, lo: f64, hi: f64) -> Vec<&TailRow> {
        self.rows.iter().filter(|r| !(lo..=hi).contains(&r.ratio)).collect()
    }

    /// Monotone tails and CIs containing the estimate.
    pub fn invariants_hold(&self) -> bool {
        TailStatistic::ALL.iter().all(|&s| {
            let rows: Vec<&TailRow> = self.rows.iter().filter(|r| r.statistic == s).collect();
            rows.windows(2).all(|w| w[1].p_emp <= w[0].p_emp)
                && rows.iter().all(|r| r.ci_lo <= r.ratio && r.ratio <= r.ci_hi)
        })
    }
}

/// Fails with `InsufficientResolution` at the first `x` where `N` samples
/// would expect fewer than [`MIN_EXPECTED_HITS`] Gaussian exceedances.
pub fn check_resolution(xs: &[f64], n: usize) -> Result<()> {
    for &x in xs {
        let expected = normal_sf(x) * n as f64;
        if !(expected >= MIN_EXPECTED_HITS) {
            return Err(Error::InsufficientResolution {
                x,
                expected,
                needed: MIN_EXPECTED_HITS,
            });
        }
    }
    Ok(())
}

/// Tail table for `W`, `−W`, `S`, `−S` over the successful replicas.
pub fn tail_ratio_table(set: &ReplicaSampleSet, xs: &[f64]) -> Result<TailRatioTable> {
    let pairs: Vec<(f64, f64)> = set
        .successes()
        .filter(|c| c.w.is_finite() && c.s.is_finite())
        .map(|c| (c.w, c.s))
        .collect();
    let w: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    table_from_samples(&w, &s, xs)
}

/// Same table from raw `W` and `S` samples.
pub fn table_from_samples(w: &[f64], s: &[f64], xs: &[f64]) -> Result<TailRatioTable> {
    let n = w.len().min(s.len());
    if n == 0 {
        return Err(Error::EmptyReplicaSet);
    }
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    check_resolution(&xs, n)?;
    let z = normal_quantile(0.975);
    let sorted = |v: &[f64], sign: f64| {
        let mut out: Vec<f64> = v[..n].iter().map(|x| sign * x).collect();
        out.sort_by(f64::total_cmp);
        out
    };
    let columns = [
        (TailStatistic::W, sorted(w, 1.0)),
        (TailStatistic::NegW, sorted(w, -1.0)),
        (TailStatistic::S, sorted(s, 1.0)),
        (TailStatistic::NegS, sorted(s, -1.0)),
    ];
    let mut rows = Vec::with_capacity(4 * xs.len());
    for (stat, values) in &columns {
        for &x in &xs {
            let hits = (n - values.partition_point(|&v| v <= x)) as u64;
            let p_emp = hits as f64 / n as f64;
            let p_gauss = normal_sf(x);
            let (lo, hi) = wilson_interval(hits, n as u64, z);
            rows.push(TailRow {
                statistic: *stat,
                x,
                hits,
                p_emp,
                p_gauss,
                ratio: p_emp / p_gauss,
                ci_lo: lo / p_gauss,
                ci_hi: hi / p_gauss,
                n_effective: n as u64,
            });
        }
    }
    Ok(TailRatioTable { xs, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;

    fn gaussian(n: usize, replica: u64) -> Vec<f64> {
        let mut noise = NoiseStream::new(31, replica);
        (0..n).map(|_| noise.next_scalar()).collect()
    }

    #[test]
    fn gaussian_samples_have_unit_ratio() {
        let w = gaussian(100_000, 0);
        let s = gaussian(100_000, 1);
        let t = table_from_samples(&w, &s, &[2.0, 1.0, 0.0]).unwrap();
        assert_eq!(t.xs, vec![0.0, 1.0, 2.0]);
        assert!(t.invariants_hold());
        for r in &t.rows {
            assert!(r.ci_lo <= 1.0 && 1.0 <= r.ci_hi, "{r:?}");
        }
        let zero = t.get(TailStatistic::W, 0.0).unwrap();
        assert!((zero.ratio - 2.0 * zero.p_emp).abs() < 1e-15);
        assert!((0.98..=1.02).contains(&zero.ratio));
    }

    #[test]
    fn unresolvable_grid_is_refused() {
        let w = gaussian(10, 0);
        let err = table_from_samples(&w, &w, &[2.0]).unwrap_err();
        assert!(matches!(err, Error::InsufficientResolution { .. }));
        assert!(check_resolution(&[1.0, 2.0], 10_000).is_ok());
        assert!(check_resolution(&[3.0], 10_000).is_err());
    }

    #[test]
    fn csv_shape() {
        let w = gaussian(1000, 2);
        let t = table_from_samples(&w, &w, &[0.0, 0.5]).unwrap();
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 1 + 8);
        assert!(csv.lines().nth(3).unwrap().starts_with("-W,0,"));
    }
}
