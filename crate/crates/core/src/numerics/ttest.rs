//! Paired-samples Student t-test with a dependency-free CDF via the
//! regularized incomplete beta function.

use super::NumericsError;

#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    pub t_stat: f64,
    pub dof: usize,
    pub p_two_sided: f64,
}

/// Paired-samples t-test of `a` against `b`.
///
/// Uses the sample standard deviation of the differences (n - 1 denominator).
/// Zero-variance differences are totalized: all-zero differences give
/// `t = 0, p = 1`; a nonzero constant difference gives `t = +/-inf, p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(NumericsError::TooFewSamples(n));
    }

    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
    let dof = n - 1;

    if ss == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t_stat: 0.0,
                dof,
                p_two_sided: 1.0,
            }
        } else {
            TTestResult {
                t_stat: mean.signum() * f64::INFINITY,
                dof,
                p_two_sided: 0.0,
            }
        });
    }

    let sd = (ss / (nf - 1.0)).sqrt();
    let t = mean / (sd / nf.sqrt());
    Ok(TTestResult {
        t_stat: t,
        dof,
        p_two_sided: student_t_two_sided_p(t, dof),
    })
}

/// Two-sided tail probability of Student's t with `dof` degrees of freedom:
/// `p = I_x(dof/2, 1/2)` with `x = dof / (dof + t^2)`.
pub(crate) fn student_t_two_sided_p(t: f64, dof: usize) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let nu = dof as f64;
    let x = nu / (nu + t * t);
    regularized_incomplete_beta(0.5 * nu, 0.5, x).clamp(0.0, 1.0)
}

/// Regularized incomplete beta function I_x(a, b) by continued fraction.
pub(crate) fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued-fraction kernel for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Gamma(x) (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
