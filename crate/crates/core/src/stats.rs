//! Two-proportion significance testing and the report's star notation.
//!
//! The test is the textbook pooled two-proportion z-test without continuity
//! correction; two-sided p-values come from the normal CDF, which is built on
//! a rational Chebyshev approximation of erf/erfc (after W. J. Cody,
//! *Rational Chebyshev approximation for the error function*, Math. Comp. 23,
//! 1969), accurate to better than 1e-12 over the full double range.

// coefficients and reference values are quoted at published precision
#![allow(clippy::excessive_precision)]

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample sizes must be positive (got n1={n1}, n2={n2})")]
    ZeroSampleSize { n1: u64, n2: u64 },
    #[error("successes exceed sample size (x={x}, n={n})")]
    CountOverflow { x: u64, n: u64 },
}

/// Outcome of a pooled two-proportion z-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropTestResult {
    pub z: f64,
    pub p_two_sided: f64,
    pub x1: u64,
    pub n1: u64,
    pub x2: u64,
    pub n2: u64,
}

/// Pooled two-proportion z-test without continuity correction.
///
/// `z = (x1/n1 - x2/n2) / sqrt(p(1-p)(1/n1 + 1/n2))` with `p` the pooled
/// proportion, and `p_two_sided = 2(1 - Phi(|z|))`. When the pooled
/// proportion is degenerate (0 or 1) both samples are identical by
/// construction, so `z = 0, p = 1`.
pub fn two_prop_test(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<PropTestResult, StatsError> {
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::ZeroSampleSize { n1, n2 });
    }
    if x1 > n1 {
        return Err(StatsError::CountOverflow { x: x1, n: n1 });
    }
    if x2 > n2 {
        return Err(StatsError::CountOverflow { x: x2, n: n2 });
    }
    let (z, p_two_sided) = if x1 + x2 == 0 || x1 + x2 == n1 + n2 {
        (0.0, 1.0)
    } else {
        let p1 = x1 as f64 / n1 as f64;
        let p2 = x2 as f64 / n2 as f64;
        let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
        let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
        let z = (p1 - p2) / se;
        // 2(1 - Phi(|z|)) = erfc(|z| / sqrt(2)), evaluated directly to avoid
        // cancellation for large |z|.
        let p = erfc(z.abs() / std::f64::consts::SQRT_2);
        (z, p)
    };
    Ok(PropTestResult {
        z,
        p_two_sided,
        x1,
        n1,
        x2,
        n2,
    })
}

/// Star notation for p-values: `***` for p < 0.001, `**` for p < 0.05,
/// `*` for p < 0.1, empty otherwise. All boundaries are strict.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Standard normal CDF via erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

const THRESH: f64 = 0.46875;
const XBIG: f64 = 26.543;
const SQRPI: f64 = 5.641_895_835_477_562_9e-1; // 1/sqrt(pi)

// Cody's rational coefficients for the three approximation intervals.
const A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
const B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];
const C: [f64; 9] = [
    5.641_884_969_886_700_9e-1,
    8.883_149_794_388_375_94e0,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
const D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];
const P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822_42e0,
    1.872_952_849_923_460_47e0,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];

/// Error function, |erf(x) - true| relative error below 1e-15.
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= THRESH {
        erf_small(x)
    } else {
        let r = erfc_positive(y);
        let r = if x < 0.0 { 2.0 - r } else { r };
        1.0 - r
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= THRESH {
        1.0 - erf_small(y)
    } else {
        erfc_positive(y)
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

// erf on [-THRESH, THRESH].
fn erf_small(x: f64) -> f64 {
    let ysq = x * x;
    let mut num = A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + A[i]) * ysq;
        den = (den + B[i]) * ysq;
    }
    x * (num + A[3]) / (den + B[3])
}

// erfc for y > THRESH.
fn erfc_positive(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        let result = (num + C[7]) / (den + D[7]);
        scaled_exp(y) * result
    } else if y < XBIG {
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let result = ysq * (num + P[4]) / (den + Q[4]);
        scaled_exp(y) * ((SQRPI - result) / y)
    } else {
        0.0
    }
}

// exp(-y^2) split as exp(-hi^2)*exp(-(y-hi)(y+hi)) with hi = trunc(16y)/16,
// which keeps the argument of the second factor small and the product accurate.
fn scaled_exp(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}
