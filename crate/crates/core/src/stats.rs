//! Small statistical helpers shared by experiments and checks.

/// One-sided sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips.
pub fn sign_test_p_value(wins: usize, trials: usize) -> f64 {
    if wins > trials {
        return 0.0;
    }
    // Sum binomial pmf terms in log space; trials stays small in practice.
    let ln_half_n = trials as f64 * 0.5f64.ln();
    let mut tail = 0.0;
    for i in wins..=trials {
        tail += (ln_choose(trials, i) + ln_half_n).exp();
    }
    tail.min(1.0)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
