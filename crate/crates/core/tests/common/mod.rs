//! Brute-force oracles written without the library's code paths.
#![allow(dead_code)]

/// Truncated Boltzmann probabilities, indexed ℓ = −l..=l.
pub fn boltzmann(beta: f64, l: i64) -> Vec<(i64, f64)> {
    let w: Vec<(i64, f64)> = (-l..=l).map(|e| (e, (-beta * (e.abs() as f64 + 1.0)).exp())).collect();
    let z: f64 = w.iter().map(|(_, x)| x).sum();
    w.into_iter().map(|(e, x)| (e, x / z)).collect()
}

/// Σ_ℓ Σ_ℓ′ p_ℓ K(ℓ′|ℓ) e^{−β(|ℓ′|−|ℓ|)} with K given as a closure.
pub fn double_sum(beta: f64, l: i64, out: (i64, i64), k: impl Fn(i64, i64) -> f64) -> f64 {
    let mut total = 0.0;
    for (e, p) in boltzmann(beta, l) {
        for f in out.0..=out.1 {
            total += p * k(e, f) * (-beta * (f.abs() - e.abs()) as f64).exp();
        }
    }
    total
}

/// Σ p_ℓ K(ℓ′|ℓ) (|ℓ′| − |ℓ|).
pub fn mean_work(beta: f64, l: i64, out: (i64, i64), k: impl Fn(i64, i64) -> f64) -> f64 {
    let mut total = 0.0;
    for (e, p) in boltzmann(beta, l) {
        for f in out.0..=out.1 {
            total += p * k(e, f) * (f.abs() - e.abs()) as f64;
        }
    }
    total
}

/// ±5 with probability ½ each.
pub fn split(e: i64, f: i64) -> f64 {
    if (f - e).abs() == 5 {
        0.5
    } else {
        0.0
    }
}

/// Sign-sorted feedback by 5; ℓ = 0 goes to ±5.
pub fn demon(e: i64, f: i64) -> f64 {
    match e.signum() {
        -1 => (f == e + 5) as i64 as f64,
        1 => (f == e - 5) as i64 as f64,
        _ => {
            if f.abs() == 5 {
                0.5
            } else {
                0.0
            }
        }
    }
}
