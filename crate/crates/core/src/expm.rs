//! Dense matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005).

use nalgebra::DMatrix;

const THETA_13: f64 = 5.371_920_351_148_152;

const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = if s > 0 { a / 2f64.powi(s) } else { a.clone() };

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
