//! Expectation of the maximum of lines `a_i + b_i Z`, `Z ~ N(0, 1)`.

use crate::normal;

/// Upper envelope: indices of the lines that are maximal somewhere, in slope
/// order, and the breakpoints between them (`cuts[0] = -inf`,
/// `cuts[last] = +inf`).
fn envelope(a: &[f64], b: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..a.len()).collect();
    // Slope ascending; among equal slopes the largest intercept (then the
    // lowest index) comes last so it survives.
    order.sort_by(|&i, &j| {
        b[i].total_cmp(&b[j])
            .then(a[i].total_cmp(&a[j]))
            .then(j.cmp(&i))
    });
    let mut lines: Vec<usize> = Vec::with_capacity(order.len());
    let mut cuts: Vec<f64> = vec![f64::NEG_INFINITY];
    for (pos, &j) in order.iter().enumerate() {
        if pos + 1 < order.len() && b[order[pos + 1]] == b[j] {
            continue;
        }
        loop {
            let Some(&l) = lines.last() else { break };
            let z = (a[l] - a[j]) / (b[j] - b[l]);
            if z <= *cuts.last().expect("nonempty") {
                lines.pop();
                cuts.pop();
                if lines.is_empty() {
                    cuts.push(f64::NEG_INFINITY);
                }
            } else {
                cuts.push(z);
                break;
            }
        }
        lines.push(j);
    }
    // `cuts` holds one breakpoint per line boundary plus the leading -inf.
    cuts.truncate(lines.len());
    cuts.push(f64::INFINITY);
    (lines, cuts)
}

/// `E[max_i (a_i + b_i Z)]`.
pub fn expected_max(a: &[f64], b: &[f64]) -> f64 {
    expected_max_grad(a, b).0
}

/// `E[max_i (a_i + b_i Z)]` and its partial derivatives in `a` and `b`.
pub fn expected_max_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty(), "expected maximum of no lines");
    let (lines, cuts) = envelope(a, b);
    let mut da = vec![0.0; a.len()];
    let mut db = vec![0.0; a.len()];
    let mut value = 0.0;
    for (s, &i) in lines.iter().enumerate() {
        let (lo, hi) = (cuts[s], cuts[s + 1]);
        let p = normal::cdf(hi) - normal::cdf(lo);
        let q = normal::pdf(lo) - normal::pdf(hi);
        value += a[i] * p + b[i] * q;
        da[i] = p;
        db[i] = q;
    }
    (value, da, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_value() {
        let v = expected_max(&[0.0, 0.0], &[-1.0, 1.0]);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn identical_and_flat_lines() {
        assert!((expected_max(&[1.0, 1.0], &[0.5, 0.5]) - 1.0).abs() < 1e-15);
        assert!((expected_max(&[1.0, 2.0, 0.0], &[0.0, 0.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dominated_lines_are_pruned() {
        // The middle line never wins.
        let v = expected_max(&[0.0, -5.0, 0.0], &[-1.0, 0.0, 1.0]);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = [0.1, 0.4, -0.2, 0.3];
        let b = [-0.8, 0.1, 1.2, 0.5];
        let (_, da, db) = expected_max_grad(&a, &b);
        let h = 1e-6;
        for i in 0..4 {
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let fd = (expected_max(&ap, &b) - expected_max(&am, &b)) / (2.0 * h);
            assert!((fd - da[i]).abs() < 1e-8);
            let mut bp = b;
            let mut bm = b;
            bp[i] += h;
            bm[i] -= h;
            let fd = (expected_max(&a, &bp) - expected_max(&a, &bm)) / (2.0 * h);
            assert!((fd - db[i]).abs() < 1e-8);
        }
    }
}
