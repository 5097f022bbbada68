use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::bessel::{bessel_i0e, bessel_i0m1};
use crate::algebra::{SigmoidFactor, Side, Weight};
use crate::dsl::{BaseKernel, KernelExpr};

/// Below this `1/l²` the periodic kernel is evaluated with `expm1` to avoid
/// cancellation; above it in exponentially scaled form.
const PER_SCALED_FROM: f64 = 1.0;

/// Base kernel with per-kernel constants precomputed.
#[derive(Debug, Clone, Copy)]
enum Evaluator {
    WhiteNoise(f64),
    Constant(f64),
    Linear { variance: f64, offset: f64 },
    SquaredExp { variance: f64, inv_two_l2: f64 },
    Periodic(PeriodicEval),
}

#[derive(Debug, Clone, Copy)]
struct PeriodicEval {
    variance: f64,
    freq: f64,
    a: f64,
    scaled: bool,
    /// `I0(a) - 1` or `e^-a I0(a)`, depending on `scaled`
    bessel: f64,
    inv_denominator: f64,
}

impl PeriodicEval {
    fn new(variance: f64, lengthscale: f64, period: f64) -> PeriodicEval {
        let a = lengthscale.powi(-2);
        let scaled = a >= PER_SCALED_FROM;
        let (bessel, denominator) = if scaled {
            let b = bessel_i0e(a);
            (b, 1.0 - b)
        } else {
            let b = bessel_i0m1(a);
            (b, a.exp_m1() - b)
        };
        PeriodicEval {
            variance,
            freq: 2.0 * PI / period,
            a,
            scaled,
            bessel,
            inv_denominator: 1.0 / denominator,
        }
    }

    #[inline]
    fn at(&self, x: f64, y: f64) -> f64 {
        let c = (self.freq * (x - y)).cos();
        let numerator = if self.scaled {
            (self.a * (c - 1.0)).exp() - self.bessel
        } else {
            (self.a * c).exp_m1() - self.bessel
        };
        self.variance * numerator * self.inv_denominator
    }
}

impl Evaluator {
    fn new(params: &BaseKernel) -> Evaluator {
        match *params {
            BaseKernel::WhiteNoise { variance } => Evaluator::WhiteNoise(variance),
            BaseKernel::Constant { variance } => Evaluator::Constant(variance),
            BaseKernel::Linear { variance, offset } => Evaluator::Linear { variance, offset },
            BaseKernel::SquaredExp {
                variance,
                lengthscale,
            } => Evaluator::SquaredExp {
                variance,
                inv_two_l2: 0.5 / (lengthscale * lengthscale),
            },
            BaseKernel::Periodic {
                variance,
                lengthscale,
                period,
            } => Evaluator::Periodic(PeriodicEval::new(variance, lengthscale, period)),
        }
    }

    #[inline]
    fn at(&self, x: f64, y: f64) -> f64 {
        match *self {
            Evaluator::WhiteNoise(v) => {
                if x == y {
                    v
                } else {
                    0.0
                }
            }
            Evaluator::Constant(v) => v,
            Evaluator::Linear { variance, offset } => variance * (x - offset) * (y - offset),
            Evaluator::SquaredExp {
                variance,
                inv_two_l2,
            } => {
                let d = x - y;
                variance * (-d * d * inv_two_l2).exp()
            }
            Evaluator::Periodic(p) => p.at(x, y),
        }
    }
}

/// Value of one base kernel at `(x, x')`.
pub fn eval_base(params: &BaseKernel, x: f64, x_prime: f64) -> f64 {
    Evaluator::new(params).at(x, x_prime)
}

/// Sigmoid weight at `x`; `Before` is `(1 + tanh((location - x)/steepness)) / 2`.
pub fn eval_sigmoid(f: &SigmoidFactor, x: f64) -> f64 {
    let t = (f.location - x) / f.steepness;
    match f.side {
        Side::Before => 0.5 * (1.0 + t.tanh()),
        Side::After => 0.5 * (1.0 - t.tanh()),
    }
}

/// Value of a full expression at `(x, x')`.
pub fn eval(expr: &KernelExpr, x: f64, x_prime: f64) -> f64 {
    match expr {
        KernelExpr::Base(b) => eval_base(b, x, x_prime),
        KernelExpr::Sum(c) => c.iter().map(|e| eval(e, x, x_prime)).sum(),
        KernelExpr::Product(c) => c.iter().map(|e| eval(e, x, x_prime)).product(),
        KernelExpr::ChangePoint {
            left,
            right,
            location,
            steepness,
        } => {
            let s = |t| eval_sigmoid(&SigmoidFactor::before(*location, *steepness), t);
            let (sx, sy) = (s(x), s(x_prime));
            sx * eval(left, x, x_prime) * sy + (1.0 - sx) * eval(right, x, x_prime) * (1.0 - sy)
        }
        KernelExpr::ChangeWindow {
            inside,
            outside,
            start,
            end,
            steepness,
        } => {
            let w = |t| window_weight(*start, *end, *steepness, t);
            let (wx, wy) = (w(x), w(x_prime));
            wx * eval(inside, x, x_prime) * wy + (1.0 - wx) * eval(outside, x, x_prime) * (1.0 - wy)
        }
        KernelExpr::Weighted { weight, inner } => {
            weight.eval(x) * eval(inner, x, x_prime) * weight.eval(x_prime)
        }
    }
}

/// Change-window inside weight `(1 - σ_start(x)) σ_end(x)`.
pub fn window_weight(start: f64, end: f64, steepness: f64, x: f64) -> f64 {
    eval_sigmoid(&SigmoidFactor::after(start, steepness), x)
        * eval_sigmoid(&SigmoidFactor::before(end, steepness), x)
}

/// Cross-Gram matrix `K[i, j] = k(rows[i], cols[j])`.
///
/// Sums are matrix sums and products are elementwise (Hadamard) products of
/// the children's Gram matrices.
pub fn gram(expr: &KernelExpr, rows: &[f64], cols: &[f64]) -> DMatrix<f64> {
    match expr {
        KernelExpr::Base(b) => {
            let ev = Evaluator::new(b);
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| ev.at(rows[i], cols[j]))
        }
        KernelExpr::Sum(c) => {
            let mut acc = gram(&c[0], rows, cols);
            for e in &c[1..] {
                acc += gram(e, rows, cols);
            }
            acc
        }
        KernelExpr::Product(c) => {
            let mut acc = gram(&c[0], rows, cols);
            for e in &c[1..] {
                acc.component_mul_assign(&gram(e, rows, cols));
            }
            acc
        }
        KernelExpr::ChangePoint {
            left,
            right,
            location,
            steepness,
        } => {
            let f = SigmoidFactor::before(*location, *steepness);
            let s = |t: &[f64]| DVector::from_iterator(t.len(), t.iter().map(|&x| eval_sigmoid(&f, x)));
            blend(&s(rows), &s(cols), gram(left, rows, cols), gram(right, rows, cols))
        }
        KernelExpr::ChangeWindow {
            inside,
            outside,
            start,
            end,
            steepness,
        } => {
            let w = |t: &[f64]| {
                DVector::from_iterator(
                    t.len(),
                    t.iter().map(|&x| window_weight(*start, *end, *steepness, x)),
                )
            };
            blend(&w(rows), &w(cols), gram(inside, rows, cols), gram(outside, rows, cols))
        }
        KernelExpr::Weighted { weight, inner } => {
            let mut k = gram(inner, rows, cols);
            apply_weight(&mut k, weight, rows, cols);
            k
        }
    }
}

/// `k[i, j] *= g(rows[i]) g(cols[j])`
pub(crate) fn apply_weight(k: &mut DMatrix<f64>, weight: &Weight, rows: &[f64], cols: &[f64]) {
    let gr: Vec<f64> = rows.iter().map(|&x| weight.eval(x)).collect();
    let gc: Vec<f64> = cols.iter().map(|&x| weight.eval(x)).collect();
    for j in 0..cols.len() {
        for i in 0..rows.len() {
            k[(i, j)] *= gr[i] * gc[j];
        }
    }
}

/// `s sᵀ ∘ a + (1 - s)(1 - s)ᵀ ∘ b`
fn blend(sr: &DVector<f64>, sc: &DVector<f64>, mut a: DMatrix<f64>, b: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] = sr[i] * a[(i, j)] * sc[j] + (1.0 - sr[i]) * b[(i, j)] * (1.0 - sc[j]);
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::expand_changes;
    use crate::dsl::parse;

    #[test]
    fn base_kernel_values() {
        let se = BaseKernel::SquaredExp {
            variance: 1.0,
            lengthscale: 1.0,
        };
        assert_eq!(eval_base(&se, 0.3, 0.3), 1.0);
        assert!((eval_base(&se, 0.0, 1.0) - 0.6065306597126334).abs() < 1e-15);
        let wn = BaseKernel::WhiteNoise { variance: 2.0 };
        assert_eq!(eval_base(&wn, 1.0, 1.5), 0.0);
        assert_eq!(eval_base(&wn, 1.0, 1.0), 2.0);
        let lin = BaseKernel::Linear {
            variance: 1.0,
            offset: 0.0,
        };
        assert_eq!(eval_base(&lin, 2.0, 3.0), 6.0);
        assert_eq!(eval_base(&BaseKernel::Constant { variance: 2.5 }, -4.0, 9.0), 2.5);
    }

    #[test]
    fn periodic_diagonal_equals_variance() {
        for (l, p) in [(1.0, 1.0), (0.01, 2.0), (0.03, 0.5), (30.0, 5.0), (1e3, 1.0), (0.999, 3.0)] {
            let per = BaseKernel::Periodic {
                variance: 3.0,
                lengthscale: l,
                period: p,
            };
            let v = eval_base(&per, 1.7, 1.7);
            assert!((v - 3.0).abs() < 1e-10, "l={l}: {v}");
        }
    }

    #[test]
    fn periodic_matches_printed_formula() {
        // direct formula in the range where it does not overflow
        let (var, l, p) = (1.5, 0.8, 2.0);
        let a: f64 = 1.0 / (l * l);
        let i0 = crate::gp::bessel::bessel_i0(a);
        let per = BaseKernel::Periodic {
            variance: var,
            lengthscale: l,
            period: p,
        };
        for d in [0.1, 0.7, 1.0, 1.9, 3.3] {
            let direct = var * (((2.0 * PI * d / p).cos() / (l * l)).exp() - i0) / (a.exp() - i0);
            assert!((eval_base(&per, 0.0, d) - direct).abs() < 1e-12);
        }
        // periodicity
        assert!((eval_base(&per, 0.0, 0.3) - eval_base(&per, 0.0, 0.3 + 2.0 * p)).abs() < 1e-12);
    }

    #[test]
    fn periodic_tiny_lengthscale_is_finite() {
        let per = BaseKernel::Periodic {
            variance: 1.0,
            lengthscale: 0.01,
            period: 1.0,
        };
        // antipodal point: (e^(-2a) - I0e(a)) / (1 - I0e(a)) with a = 1e4
        let v = eval_base(&per, 0.0, 0.5);
        let b = crate::gp::bessel::bessel_i0e(1e4);
        assert!(v.is_finite());
        assert!((v + b / (1.0 - b)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn sigmoid_values() {
        let f = SigmoidFactor::before(0.0, 1.0);
        assert_eq!(eval_sigmoid(&f, 0.0), 0.5);
        assert!((eval_sigmoid(&f, -1.0) - 0.8807970779778823).abs() < 1e-15);
        assert_eq!(eval_sigmoid(&f, 1e6), 0.0);
        assert_eq!(eval_sigmoid(&SigmoidFactor::after(0.0, 1.0), 1e6), 1.0);
    }

    #[test]
    fn gram_basics() {
        let c = parse("C[variance=2]").unwrap();
        let g = gram(&c, &[0.0, 1.0, 5.0], &[2.0, 3.0]);
        assert!(g.iter().all(|&v| v == 2.0));
        assert_eq!((g.nrows(), g.ncols()), (3, 2));
        let sum = parse("SE + C").unwrap();
        let grid = [0.0, 1.0];
        let expect = gram(&parse("SE").unwrap(), &grid, &grid) + gram(&parse("C").unwrap(), &grid, &grid);
        assert_eq!(gram(&sum, &grid, &grid), expect);
    }

    #[test]
    fn change_point_value() {
        let e = parse("CP(WN, C)").unwrap();
        let s = 0.5 * (1.0 + 5f64.tanh());
        let want = s * s + (1.0 - s) * (1.0 - s);
        assert!((gram(&e, &[-5.0], &[-5.0])[(0, 0)] - want).abs() < 1e-15);
        assert!((eval(&expand_changes(&e), -5.0, -5.0) - want).abs() < 1e-15);
    }

    #[test]
    fn gram_matches_pointwise_eval() {
        let e = parse("CW(SE * LIN + PER[period=0.7], WN + C)[start=-1, end=1] * CP(SE, LIN)[location=0.5]").unwrap();
        let rows = [-2.0, -0.5, 0.0, 0.5, 3.0];
        let cols = [-1.0, 0.0, 0.25];
        let g = gram(&e, &rows, &cols);
        for (i, &x) in rows.iter().enumerate() {
            for (j, &y) in cols.iter().enumerate() {
                assert!((g[(i, j)] - eval(&e, x, y)).abs() < 1e-14);
            }
        }
    }
}
