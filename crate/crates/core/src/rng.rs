//! Counter-addressed random streams for path simulation.
//!
//! Each `(seed, path)` pair selects its own ChaCha8 stream (the path index is
//! the ChaCha stream id) and every time step consumes a fixed block of words:
//! `noise_dim` Gaussian draws followed by one auxiliary uniform. The draws of
//! step `i` on path `p` are therefore a pure function of `(seed, p, i)`, which
//! is what makes batches reproducible under any worker count.

#[allow(unused_imports)] // shadowed by inherent methods when std is in the build
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

#[derive(Debug, Clone)]
pub struct PathStream {
    rng: ChaCha8Rng,
    noise_dim: usize,
}

impl PathStream {
    pub fn new(seed: u64, path: u64, noise_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self { rng, noise_dim }
    }

    /// Number of 32-bit ChaCha words one step consumes.
    pub fn words_per_step(&self) -> u128 {
        2 * (self.noise_dim as u128 + 1)
    }

    /// Jumps to the first word of `step`.
    pub fn seek_step(&mut self, step: usize) {
        let pos = step as u128 * self.words_per_step();
        self.rng.set_word_pos(pos);
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    pub fn standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    /// Fills `normals` (length `noise_dim`) with N(0, 1) draws and returns the
    /// auxiliary uniform of the step.
    pub fn step_draws(&mut self, normals: &mut [f64]) -> f64 {
        debug_assert_eq!(normals.len(), self.noise_dim);
        for w in normals.iter_mut() {
            *w = self.standard_normal();
        }
        self.uniform()
    }
}

/// Quantile function of the standard normal distribution (Wichura's AS241,
/// relative accuracy about 1e-16).
#[allow(clippy::inconsistent_digit_grouping, clippy::excessive_precision)] // coefficients kept as published
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((r * 5226.495_278_852_545 + 28729.085_735_721_943) * r
            + 39307.895_800_092_71)
            * r
            + 21213.794_301_586_596)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn quantile_matches_reference_values() {
        // reference: scipy.special.ndtri
        let cases = [
            (1e-300, -37.0470962993612),
            (1e-10, -6.361340902404056),
            (0.02425, -1.972961051311885),
            (0.3, -0.5244005127080409),
            (0.5, 0.0),
            (0.975, 1.959963984540054),
            (1.0 - 1e-12, 7.0344869100478356),
        ];
        for (p, expected) in cases {
            let got = inverse_normal_cdf(p);
            assert!(
                (got - expected).abs() <= 1e-13 * (1.0 + expected.abs()),
                "p={p}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn quantile_is_odd() {
        for &p in &[1e-8, 0.01, 0.2, 0.4999] {
            let lo = inverse_normal_cdf(p);
            let hi = inverse_normal_cdf(1.0 - p);
            assert!((lo + hi).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn seeking_reproduces_sequential_draws() {
        let mut seq = PathStream::new(7, 3, 2);
        let mut draws: Vec<(f64, f64, f64)> = Vec::new();
        for _ in 0..50 {
            let mut w = [0.0; 2];
            let u = seq.step_draws(&mut w);
            draws.push((w[0], w[1], u));
        }
        for step in [0usize, 1, 17, 49] {
            let mut s = PathStream::new(7, 3, 2);
            s.seek_step(step);
            let mut w = [0.0; 2];
            let u = s.step_draws(&mut w);
            assert_eq!((w[0], w[1], u), draws[step]);
        }
    }

    #[test]
    fn paths_are_distinct_streams() {
        let mut a = PathStream::new(1, 0, 1);
        let mut b = PathStream::new(1, 1, 1);
        let xa: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        assert_ne!(xa, xb);
        let mut c = PathStream::new(1, 0, 1);
        let xc: Vec<f64> = (0..8).map(|_| c.uniform()).collect();
        assert_eq!(xa, xc);
    }

    #[test]
    fn normal_moments() {
        let mut s = PathStream::new(99, 0, 1);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.01);
    }
}
