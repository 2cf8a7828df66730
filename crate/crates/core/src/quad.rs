//! Globally adaptive Gauss–Kronrod (7, 15) quadrature for complex integrands.

use crate::hilbert::C64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    pub converged: bool,
}

fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).norm();
    (value, err)
}

/// `∫_a^b f`, bisecting the worst interval until the summed error estimate is
/// below `max(abs_tol, rel_tol · |I|)` or `max_intervals` is reached.
pub fn integrate<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> QuadResult {
    if a == b {
        return QuadResult {
            value: C64::default(),
            error: 0.0,
            converged: true,
        };
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let value: C64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        let target = abs_tol.max(rel_tol * value.norm());
        if error <= target || intervals.len() >= max_intervals {
            return QuadResult {
                value,
                error,
                converged: error <= target,
            };
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // Interval cannot be split further in floating point.
            return QuadResult {
                value: intervals.iter().map(|iv| iv.2).sum::<C64>() + gk15(&mut f, lo, hi).0,
                error,
                converged: false,
            };
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}
