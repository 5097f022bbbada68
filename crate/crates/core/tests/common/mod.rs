//! Random expressions and synthetic datasets shared by integration tests.
#![allow(dead_code)]

use gpcompose::algebra::{SigmoidFactor, Weight};
use gpcompose::dsl::{parse_with_defaults, ParseDefaults};
use gpcompose::{BaseKernel, KernelExpr, TimeSeriesDataset};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_base(rng: &mut impl Rng) -> BaseKernel {
    let variance = rng.gen_range(0.5..2.0);
    match rng.gen_range(0..5) {
        0 => BaseKernel::WhiteNoise { variance },
        1 => BaseKernel::Constant { variance },
        2 => BaseKernel::Linear {
            variance: rng.gen_range(0.2..1.0),
            offset: rng.gen_range(-2.0..2.0),
        },
        3 => BaseKernel::SquaredExp {
            variance,
            lengthscale: rng.gen_range(0.3..3.0),
        },
        _ => BaseKernel::Periodic {
            variance,
            lengthscale: rng.gen_range(0.3..3.0),
            period: rng.gen_range(0.5..3.0),
        },
    }
}

fn random_weight(rng: &mut impl Rng) -> Weight {
    let steepness = rng.gen_range(0.2..2.0);
    match rng.gen_range(0..3) {
        0 => Weight::Sigmoid(SigmoidFactor::before(rng.gen_range(-2.0..2.0), steepness)),
        1 => Weight::Sigmoid(SigmoidFactor::after(rng.gen_range(-2.0..2.0), steepness)),
        _ => {
            let start = rng.gen_range(-2.0..1.0);
            Weight::OutsideWindow {
                start,
                end: start + rng.gen_range(0.3..2.0),
                steepness,
            }
        }
    }
}

/// Random expression whose `depth()` is at most `depth`.
pub fn random_expr(rng: &mut impl Rng, depth: usize) -> KernelExpr {
    if depth <= 1 || rng.gen_bool(0.25) {
        return KernelExpr::Base(random_base(rng));
    }
    let child = |rng: &mut _| random_expr(rng, depth - 1);
    match rng.gen_range(0..5) {
        0 | 1 => {
            let n = rng.gen_range(2..=3);
            let children: Vec<KernelExpr> = (0..n).map(|_| child(rng)).collect();
            if rng.gen_bool(0.5) {
                KernelExpr::Sum(children)
            } else {
                KernelExpr::Product(children)
            }
        }
        2 => KernelExpr::ChangePoint {
            left: Box::new(child(rng)),
            right: Box::new(child(rng)),
            location: rng.gen_range(-2.0..2.0),
            steepness: rng.gen_range(0.2..2.0),
        },
        3 => {
            let start = rng.gen_range(-2.0..1.0);
            KernelExpr::ChangeWindow {
                inside: Box::new(child(rng)),
                outside: Box::new(child(rng)),
                start,
                end: start + rng.gen_range(0.3..2.0),
                steepness: rng.gen_range(0.2..2.0),
            }
        }
        _ => KernelExpr::Weighted {
            weight: random_weight(rng),
            inner: Box::new(child(rng)),
        },
    }
}

/// `n` sorted distinct points in `[lo, hi]`, at least `min_gap` apart.
pub fn random_grid(rng: &mut impl Rng, n: usize, lo: f64, hi: f64, min_gap: f64) -> Vec<f64> {
    loop {
        let mut g: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        g.sort_by(f64::total_cmp);
        if g.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            return g;
        }
    }
}

pub fn uniform_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// The change-window expression used as the code generation fixture.
pub const FLAGSHIP: &str = "CW(SE + CW(WN + SE, WN), C)";

/// 132 daily points split 120/12, a slow trend plus two oscillations. No randomness.
pub fn flagship_data() -> TimeSeriesDataset {
    let times: Vec<f64> = (0..132).map(|i| i as f64).collect();
    let values = times
        .iter()
        .map(|&t: &f64| 1.1 + 0.002 * t + 0.03 * (t / 9.0).sin() + 0.01 * (t / 2.3).cos())
        .collect();
    TimeSeriesDataset::new(times, values, 120).unwrap()
}

/// Flagship expression with change placement bound to the training range.
pub fn flagship_expr() -> KernelExpr {
    parse_with_defaults(FLAGSHIP, &ParseDefaults::for_range(0.0, 119.0)).unwrap()
}

/// `n` points of `sin + linear trend + noise` on `[0, 10)`, training only.
pub fn sine_trend(n: usize, rng: &mut impl Rng) -> TimeSeriesDataset {
    let times: Vec<f64> = (0..n).map(|i| i as f64 * 10.0 / n as f64).collect();
    let values = times
        .iter()
        .map(|&t| {
            let e: f64 = StandardNormal.sample(rng);
            0.4 * t + 1.5 * (2.0 * std::f64::consts::PI * t / 1.5).sin() + 0.1 * e
        })
        .collect();
    TimeSeriesDataset::train_only(times, values).unwrap()
}
