//! Discretized space-time white noise.
//!
//! Every Gaussian is a pure function of `(seed, replicate, step, cell)`:
//! a Philox4x32-10 block is keyed by the seed and counted by
//! `(cell pair, step, replicate)`, and its output is mapped through an
//! inverse normal CDF. No state is shared between replicates, so results do
//! not depend on how replicates are scheduled across threads.

use serde::{Deserialize, Serialize};

/// Generator identity recorded in output metadata.
pub const RNG_FAMILY: &str = "philox4x32-10+as241";
pub const RNG_VERSION: &str = "1";

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Inverse standard normal CDF, Wichura's AS241 (PPND16), accurate to
/// about 1e-16 relative.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_7) * r
                + 45921.953_931_549_871)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545_6 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_595)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_911)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    if tail <= 0.0 {
        return if q < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
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
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
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
                + 1.0)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// Maps two 32-bit words to a uniform on the open interval (0, 1).
#[inline]
fn open_uniform(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 32 | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Position in the noise field of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub replicate_index: u64,
    pub step_counter: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, replicate_index: u64) -> Self {
        Self { seed, replicate_index, step_counter: 0 }
    }

    fn key(&self) -> [u32; 2] {
        [self.seed as u32, (self.seed >> 32) as u32 ^ ((self.replicate_index >> 32) as u32)]
    }

    /// Writes standard normals for the current step into `out` (two cells
    /// per Philox block) without advancing the stream.
    pub fn standard_normals_into(&self, out: &mut [f64]) {
        let key = self.key();
        let step = self.step_counter;
        let rep = self.replicate_index as u32;
        for (block, pair) in out.chunks_mut(2).enumerate() {
            let r = philox4x32_10([block as u32, step as u32, (step >> 32) as u32, rep], key);
            pair[0] = inverse_normal_cdf(open_uniform(r[0], r[1]));
            if pair.len() > 1 {
                pair[1] = inverse_normal_cdf(open_uniform(r[2], r[3]));
            }
        }
    }

    /// Fills `out` with centered Gaussians of variance `dt/dx` and advances
    /// the step counter.
    pub fn fill_increments(&mut self, out: &mut [f64], dt: f64, dx: f64) {
        self.standard_normals_into(out);
        let scale = (dt / dx).sqrt();
        for v in out.iter_mut() {
            *v *= scale;
        }
        self.step_counter += 1;
    }

    /// Allocating form of [`fill_increments`](Self::fill_increments).
    pub fn sample_increments(&mut self, nx: usize, dt: f64, dx: f64) -> Vec<f64> {
        assert!(dt > 0.0 && dx > 0.0, "dt and dx must be positive");
        let mut out = vec![0.0; nx];
        self.fill_increments(&mut out, dt, dx);
        out
    }
}
