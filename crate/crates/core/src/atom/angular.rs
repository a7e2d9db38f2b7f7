//! Angular-momentum recoupling used for hyperfine-resolved branching.
//!
//! All arguments are passed doubled (`2j`) so half-integers stay exact.

fn factorial(n: i64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn triangle_ok(a: i64, b: i64, c: i64) -> bool {
    (a + b + c) % 2 == 0 && c <= a + b && c >= (a - b).abs()
}

fn delta(a: i64, b: i64, c: i64) -> f64 {
    // arguments doubled; every sum below is even once the triangle holds
    let f = |x: i64| factorial(x / 2);
    (f(a + b - c) * f(a - b + c) * f(-a + b + c) / f(a + b + c + 2)).sqrt()
}

/// Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}` by the Racah sum, arguments doubled.
pub fn wigner_6j(j1: i64, j2: i64, j3: i64, j4: i64, j5: i64, j6: i64) -> f64 {
    if !(triangle_ok(j1, j2, j3)
        && triangle_ok(j1, j5, j6)
        && triangle_ok(j4, j2, j6)
        && triangle_ok(j4, j5, j3))
    {
        return 0.0;
    }
    let a = [
        (j1 + j2 + j3) / 2,
        (j1 + j5 + j6) / 2,
        (j4 + j2 + j6) / 2,
        (j4 + j5 + j3) / 2,
    ];
    let b = [
        (j1 + j2 + j4 + j5) / 2,
        (j2 + j3 + j5 + j6) / 2,
        (j3 + j1 + j6 + j4) / 2,
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let mut sum = 0.0;
    for t in t_min..=t_max {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        let den = a.iter().map(|&ai| factorial(t - ai)).product::<f64>()
            * b.iter().map(|&bi| factorial(bi - t)).product::<f64>();
        sum += sign * factorial(t + 1) / den;
    }
    delta(j1, j2, j3) * delta(j1, j5, j6) * delta(j4, j2, j6) * delta(j4, j5, j3) * sum
}

/// Fraction of decays from hyperfine level `F'` (of fine level `J'`) landing in `F` (of `J`)
/// for a rank-`k` multipole transition with nuclear spin `I`. Doubled arguments.
///
/// `(2J'+1)(2F+1){J J' k; F' F I}^2`, which sums to one over `F`.
pub fn hyperfine_branching(j_upper: i64, f_upper: i64, j_lower: i64, f_lower: i64, rank: i64, nuclear: i64) -> f64 {
    let w = wigner_6j(j_lower, j_upper, 2 * rank, f_upper, f_lower, nuclear);
    (j_upper + 1) as f64 * (f_lower + 1) as f64 * w * w
}
