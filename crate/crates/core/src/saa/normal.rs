use crate::error::{Error, Result};

/// Inverse of the standard normal distribution function.
///
/// Wichura's AS 241 (PPND16), accurate to about 1e-16 relative.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::validation("p", format!("must lie in (0,1), got {p}")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -z } else { z })
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.043_631_386_071_656_6e-15,
];

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(z) by composite Simpson integration of the density from 0.
    fn cdf_by_integration(z: f64) -> f64 {
        let n = 20_000;
        let h = z / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(z);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn centre_and_table_value() {
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
        assert!((inverse_normal_cdf(0.99).unwrap() - 2.326348).abs() < 1e-5);
    }

    #[test]
    fn matches_integrated_cdf() {
        for p in [0.5001, 0.6, 0.75, 0.9, 0.95, 0.975, 0.99, 0.999, 0.999_999] {
            let z = inverse_normal_cdf(p).unwrap();
            assert!((cdf_by_integration(z) - p).abs() < 1e-9, "p={p} z={z}");
        }
    }

    #[test]
    fn rejects_closed_endpoints() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(inverse_normal_cdf(p).is_err());
        }
    }

    proptest::proptest! {
        #[test]
        fn antisymmetric(p in 1e-6f64..0.5) {
            let a = inverse_normal_cdf(p).unwrap();
            let b = inverse_normal_cdf(1.0 - p).unwrap();
            proptest::prop_assert!((a + b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }
}
