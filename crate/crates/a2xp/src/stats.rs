//! One-way repeated-measures ANOVA over per-sample attention weights.
//!
//! Subjects are samples, conditions are experts. The F tail probability is
//! evaluated through a regularized incomplete beta (continued fraction), no
//! sphericity correction.

use crate::error::{Error, Result};

/// Result of a repeated-measures ANOVA.
#[derive(Debug, Clone, Copy)]
pub struct RmAnova {
    pub f_stat: f64,
    pub df_conditions: usize,
    pub df_error: usize,
    pub p_value: f64,
    /// Zero error variance: p is 0 when condition means differ, else 1.
    pub degenerate: bool,
}

/// Relative threshold under which the error sum of squares counts as zero.
const DEGENERATE_EPS: f64 = 1e-12;

/// One-way RM-ANOVA on an S x N table (rows = subjects, columns =
/// conditions). Requires S >= 2, N >= 2 and rectangular data.
pub fn rm_anova(table: &[Vec<f64>]) -> Result<RmAnova> {
    let s = table.len();
    if s < 2 {
        return Err(Error::config("rm_anova.subjects", "need S >= 2"));
    }
    let n = table[0].len();
    if n < 2 {
        return Err(Error::config("rm_anova.conditions", "need N >= 2"));
    }
    for row in table {
        if row.len() != n {
            return Err(Error::shape(
                format!("{n} conditions"),
                format!("{} conditions", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite cell in rm_anova".into()));
        }
    }

    let sn = (s * n) as f64;
    let grand: f64 = table.iter().flatten().sum::<f64>() / sn;
    let cond_means: Vec<f64> = (0..n)
        .map(|j| table.iter().map(|row| row[j]).sum::<f64>() / s as f64)
        .collect();
    let subj_means: Vec<f64> = table
        .iter()
        .map(|row| row.iter().sum::<f64>() / n as f64)
        .collect();

    let ss_cond: f64 = s as f64
        * cond_means
            .iter()
            .map(|m| (m - grand) * (m - grand))
            .sum::<f64>();
    let ss_subj: f64 = n as f64
        * subj_means
            .iter()
            .map(|m| (m - grand) * (m - grand))
            .sum::<f64>();
    let ss_total: f64 = table
        .iter()
        .flatten()
        .map(|v| (v - grand) * (v - grand))
        .sum();
    let ss_err = (ss_total - ss_cond - ss_subj).max(0.0);

    let df1 = n - 1;
    let df2 = (n - 1) * (s - 1);

    let scale = ss_total.max(1.0);
    if ss_err <= DEGENERATE_EPS * scale {
        let differs = ss_cond > DEGENERATE_EPS * scale;
        return Ok(RmAnova {
            f_stat: f64::INFINITY,
            df_conditions: df1,
            df_error: df2,
            p_value: if differs { 0.0 } else { 1.0 },
            degenerate: true,
        });
    }

    let ms_cond = ss_cond / df1 as f64;
    let ms_err = ss_err / df2 as f64;
    let f_stat = ms_cond / ms_err;
    let p_value = f_upper_tail(f_stat, df1 as f64, df2 as f64);
    Ok(RmAnova {
        f_stat,
        df_conditions: df1,
        df_error: df2,
        p_value,
        degenerate: false,
    })
}

/// Upper-tail probability of the F(df1, df2) distribution:
/// P(F > f) = I_{df2/(df2 + df1 f)}(df2/2, df1/2).
pub fn f_upper_tail(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    reg_inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction,
/// accurate to ~1e-14.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
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
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
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
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
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

/// Lanczos log-gamma (g = 7, n = 9), ~1e-13 relative accuracy.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
