//! Sum-of-products normal form for kernel expressions.
//!
//! Every expression rewrites to a sum of [`ProductTerm`]s. A term is a core
//! kernel drawn from `{WN, C, Π PER, SE·Π PER}`, times zero or more LIN
//! factors, times zero or more input-dependent weights coming from change
//! points and change windows. The rewrite rules are:
//!
//! * products distribute over sums;
//! * `SE(a, l1) · SE(b, l2) = SE(a·b, (l1⁻² + l2⁻²)^(-1/2))`;
//! * `WN(a) · k = WN(a · k(x, x))` for stationary `k` (C, PER, SE, WN);
//! * `C(a) · k` is `k` with its variance scaled by `a`.
//!
//! Variances of all factors in a term are folded into the core, so LIN and PER
//! factors in canonical form always carry unit variance. Weights are never
//! merged; they accumulate on the term.

use crate::dsl::{BaseKernel, KernelExpr};
use crate::gp::gram;

/// Which side of a sigmoid's location the weight selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// `σ(x) = (1 + tanh((location - x) / steepness)) / 2`, close to one for `x < location`.
    Before,
    /// `1 - σ(x)`, close to one for `x > location`.
    After,
}

/// A tanh sigmoid weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidFactor {
    pub location: f64,
    pub steepness: f64,
    pub side: Side,
}

impl SigmoidFactor {
    pub fn before(location: f64, steepness: f64) -> SigmoidFactor {
        SigmoidFactor {
            location,
            steepness,
            side: Side::Before,
        }
    }

    pub fn after(location: f64, steepness: f64) -> SigmoidFactor {
        SigmoidFactor {
            location,
            steepness,
            side: Side::After,
        }
    }
}

/// Input-dependent weight `g` applied as `g(x) k(x, x') g(x')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Sigmoid(SigmoidFactor),
    /// `1 - (1 - σ_start(x)) σ_end(x)`: the complement of a change window's
    /// inside weight. It is not a product of sigmoids, so it is kept as one factor.
    OutsideWindow { start: f64, end: f64, steepness: f64 },
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Weight::Sigmoid(f) => crate::gp::eval_sigmoid(&f, x),
            Weight::OutsideWindow {
                start,
                end,
                steepness,
            } => {
                let inside = crate::gp::eval_sigmoid(&SigmoidFactor::after(start, steepness), x)
                    * crate::gp::eval_sigmoid(&SigmoidFactor::before(end, steepness), x);
                1.0 - inside
            }
        }
    }
}

/// One PER factor with its variance folded into the term's core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicShape {
    pub lengthscale: f64,
    pub period: f64,
}

/// The stationary core of a product term.
#[derive(Debug, Clone, PartialEq)]
pub enum Core {
    WhiteNoise {
        variance: f64,
    },
    Constant {
        variance: f64,
    },
    /// Product of one or more PER factors.
    Periodic {
        variance: f64,
        shapes: Vec<PeriodicShape>,
    },
    /// SE times zero or more PER factors.
    SquaredExp {
        variance: f64,
        lengthscale: f64,
        periodic: Vec<PeriodicShape>,
    },
}

impl Core {
    pub fn variance(&self) -> f64 {
        match *self {
            Core::WhiteNoise { variance }
            | Core::Constant { variance }
            | Core::Periodic { variance, .. }
            | Core::SquaredExp { variance, .. } => variance,
        }
    }

    pub fn periodic_shapes(&self) -> &[PeriodicShape] {
        match self {
            Core::Periodic { shapes, .. } => shapes,
            Core::SquaredExp { periodic, .. } => periodic,
            _ => &[],
        }
    }

    /// Base kernels whose product equals the core; the first one carries the variance.
    pub fn factors(&self) -> Vec<BaseKernel> {
        let per = |s: &PeriodicShape, variance: f64| BaseKernel::Periodic {
            variance,
            lengthscale: s.lengthscale,
            period: s.period,
        };
        match self {
            Core::WhiteNoise { variance } => vec![BaseKernel::WhiteNoise {
                variance: *variance,
            }],
            Core::Constant { variance } => vec![BaseKernel::Constant {
                variance: *variance,
            }],
            Core::Periodic { variance, shapes } => shapes
                .iter()
                .enumerate()
                .map(|(i, s)| per(s, if i == 0 { *variance } else { 1.0 }))
                .collect(),
            Core::SquaredExp {
                variance,
                lengthscale,
                periodic,
            } => std::iter::once(BaseKernel::SquaredExp {
                variance: *variance,
                lengthscale: *lengthscale,
            })
            .chain(periodic.iter().map(|s| per(s, 1.0)))
            .collect(),
        }
    }
}

/// `core · Π LIN · Π weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub core: Core,
    /// Offsets of unit-variance LIN factors.
    pub lin_offsets: Vec<f64>,
    pub weights: Vec<Weight>,
}

impl ProductTerm {
    fn from_factors(bases: &[BaseKernel], weights: Vec<Weight>) -> ProductTerm {
        let variance: f64 = bases.iter().map(BaseKernel::variance).product();
        let mut has_wn = false;
        let mut se_precision = 0.0;
        let mut has_se = false;
        let mut shapes = Vec::new();
        let mut lin_offsets = Vec::new();
        for b in bases {
            match *b {
                BaseKernel::WhiteNoise { .. } => has_wn = true,
                BaseKernel::Constant { .. } => {}
                BaseKernel::Linear { offset, .. } => lin_offsets.push(offset),
                BaseKernel::SquaredExp { lengthscale, .. } => {
                    has_se = true;
                    se_precision += lengthscale.powi(-2);
                }
                BaseKernel::Periodic {
                    lengthscale,
                    period,
                    ..
                } => shapes.push(PeriodicShape {
                    lengthscale,
                    period,
                }),
            }
        }
        let core = if has_wn {
            // SE and PER equal their variance on the diagonal, which is all WN sees.
            Core::WhiteNoise { variance }
        } else if has_se {
            Core::SquaredExp {
                variance,
                lengthscale: se_precision.powf(-0.5),
                periodic: shapes,
            }
        } else if !shapes.is_empty() {
            Core::Periodic { variance, shapes }
        } else {
            Core::Constant { variance }
        };
        ProductTerm {
            core,
            lin_offsets,
            weights,
        }
    }

    pub fn has_weights(&self) -> bool {
        !self.weights.is_empty()
    }

    /// Expression for this single term.
    pub fn to_expr(&self) -> KernelExpr {
        let mut factors: Vec<KernelExpr> = Vec::new();
        let lin = |variance: f64, offset: f64| KernelExpr::Base(BaseKernel::Linear { variance, offset });
        match (&self.core, self.lin_offsets.split_first()) {
            // C · LIN · ... reads better as a scaled LIN
            (Core::Constant { variance }, Some((first, rest))) => {
                factors.push(lin(*variance, *first));
                factors.extend(rest.iter().map(|o| lin(1.0, *o)));
            }
            (core, _) => {
                factors.extend(core.factors().into_iter().map(KernelExpr::Base));
                factors.extend(self.lin_offsets.iter().map(|o| lin(1.0, *o)));
            }
        }
        let mut expr = KernelExpr::product_of(factors);
        for w in &self.weights {
            expr = KernelExpr::weighted(*w, expr);
        }
        expr
    }

    /// Equality up to an absolute tolerance on every hyperparameter, with
    /// factor lists compared as multisets.
    pub fn approx_eq(&self, other: &ProductTerm, tol: f64) -> bool {
        let a = self.signature();
        let b = other.signature();
        a.0 == b.0
            && a.1.len() == b.1.len()
            && a.1.iter().zip(&b.1).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// (shape tag, flattened values) with unordered factor lists sorted.
    fn signature(&self) -> (String, Vec<f64>) {
        let mut values = Vec::new();
        let tag = match &self.core {
            Core::WhiteNoise { variance } => {
                values.push(*variance);
                "WN".to_string()
            }
            Core::Constant { variance } => {
                values.push(*variance);
                "C".to_string()
            }
            Core::Periodic { variance, shapes } => {
                values.push(*variance);
                push_shapes(&mut values, shapes);
                format!("PER{}", shapes.len())
            }
            Core::SquaredExp {
                variance,
                lengthscale,
                periodic,
            } => {
                values.push(*variance);
                values.push(*lengthscale);
                push_shapes(&mut values, periodic);
                format!("SE*PER{}", periodic.len())
            }
        };
        let mut lin = self.lin_offsets.clone();
        lin.sort_by(f64::total_cmp);
        values.extend(&lin);
        let mut weights: Vec<(u8, Vec<f64>)> = self
            .weights
            .iter()
            .map(|w| match *w {
                Weight::Sigmoid(f) => (
                    if f.side == Side::Before { 0 } else { 1 },
                    vec![f.location, f.steepness],
                ),
                Weight::OutsideWindow {
                    start,
                    end,
                    steepness,
                } => (2, vec![start, end, steepness]),
            })
            .collect();
        weights.sort_by(|a, b| {
            a.0.cmp(&b.0).then_with(|| {
                a.1.iter()
                    .zip(&b.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let wtag: String = weights.iter().map(|(t, _)| t.to_string()).collect();
        for (_, v) in weights {
            values.extend(v);
        }
        (format!("{tag}|LIN{}|W{wtag}", lin.len()), values)
    }
}

fn push_shapes(values: &mut Vec<f64>, shapes: &[PeriodicShape]) {
    let mut sorted = shapes.to_vec();
    sorted.sort_by(|a, b| {
        a.lengthscale
            .total_cmp(&b.lengthscale)
            .then(a.period.total_cmp(&b.period))
    });
    for s in sorted {
        values.push(s.lengthscale);
        values.push(s.period);
    }
}

/// A kernel in sum-of-products normal form. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalKernel {
    pub terms: Vec<ProductTerm>,
}

impl CanonicalKernel {
    pub fn has_weights(&self) -> bool {
        self.terms.iter().any(ProductTerm::has_weights)
    }

    /// Same multiset of terms, hyperparameters compared with absolute tolerance `tol`.
    pub fn approx_eq(&self, other: &CanonicalKernel, tol: f64) -> bool {
        if self.terms.len() != other.terms.len() {
            return false;
        }
        let mut used = vec![false; other.terms.len()];
        self.terms.iter().all(|t| {
            match other
                .terms
                .iter()
                .enumerate()
                .find(|(i, o)| !used[*i] && t.approx_eq(o, tol))
            {
                Some((i, _)) => {
                    used[i] = true;
                    true
                }
                None => false,
            }
        })
    }
}

/// Replace every CP and CW node by a sum of weighted children.
///
/// `CP(k1, k2)` becomes `BEFORE(k1) + AFTER(k2)` at the change location.
/// `CW(kin, kout)` becomes `AFTER(BEFORE(kin)[end])[start] + OUTSIDE(kout)`.
pub fn expand_changes(expr: &KernelExpr) -> KernelExpr {
    match expr {
        KernelExpr::Base(_) => expr.clone(),
        KernelExpr::Sum(c) => KernelExpr::Sum(c.iter().map(expand_changes).collect()),
        KernelExpr::Product(c) => KernelExpr::Product(c.iter().map(expand_changes).collect()),
        KernelExpr::ChangePoint {
            left,
            right,
            location,
            steepness,
        } => KernelExpr::Sum(vec![
            KernelExpr::weighted(
                Weight::Sigmoid(SigmoidFactor::before(*location, *steepness)),
                expand_changes(left),
            ),
            KernelExpr::weighted(
                Weight::Sigmoid(SigmoidFactor::after(*location, *steepness)),
                expand_changes(right),
            ),
        ]),
        KernelExpr::ChangeWindow {
            inside,
            outside,
            start,
            end,
            steepness,
        } => KernelExpr::Sum(vec![
            KernelExpr::weighted(
                Weight::Sigmoid(SigmoidFactor::after(*start, *steepness)),
                KernelExpr::weighted(
                    Weight::Sigmoid(SigmoidFactor::before(*end, *steepness)),
                    expand_changes(inside),
                ),
            ),
            KernelExpr::weighted(
                Weight::OutsideWindow {
                    start: *start,
                    end: *end,
                    steepness: *steepness,
                },
                expand_changes(outside),
            ),
        ]),
        KernelExpr::Weighted { weight, inner } => {
            KernelExpr::weighted(*weight, expand_changes(inner))
        }
    }
}

/// A product of base kernels with its accumulated weights, before the rules run.
#[derive(Clone)]
struct RawTerm {
    bases: Vec<BaseKernel>,
    weights: Vec<Weight>,
}

fn distribute(expr: &KernelExpr) -> Vec<RawTerm> {
    match expr {
        KernelExpr::Base(b) => vec![RawTerm {
            bases: vec![*b],
            weights: vec![],
        }],
        KernelExpr::Sum(c) => c.iter().flat_map(distribute).collect(),
        KernelExpr::Product(c) => {
            let mut acc = vec![RawTerm {
                bases: vec![],
                weights: vec![],
            }];
            for child in c {
                let child_terms = distribute(child);
                let mut next = Vec::with_capacity(acc.len() * child_terms.len());
                for a in &acc {
                    for t in &child_terms {
                        let mut bases = a.bases.clone();
                        bases.extend_from_slice(&t.bases);
                        let mut weights = a.weights.clone();
                        weights.extend_from_slice(&t.weights);
                        next.push(RawTerm { bases, weights });
                    }
                }
                acc = next;
            }
            acc
        }
        KernelExpr::ChangePoint { .. } | KernelExpr::ChangeWindow { .. } => {
            distribute(&expand_changes(expr))
        }
        KernelExpr::Weighted { weight, inner } => distribute(inner)
            .into_iter()
            .map(|mut t| {
                t.weights.push(*weight);
                t
            })
            .collect(),
    }
}

/// Rewrite an expression into normal form.
pub fn simplify(expr: &KernelExpr) -> CanonicalKernel {
    let terms = distribute(expr)
        .into_iter()
        .map(|t| ProductTerm::from_factors(&t.bases, t.weights))
        .collect();
    CanonicalKernel { terms }
}

/// Expression equal to the canonical form pointwise.
pub fn to_expr(canon: &CanonicalKernel) -> KernelExpr {
    KernelExpr::sum_of(canon.terms.iter().map(ProductTerm::to_expr).collect())
}

/// True iff the Gram matrices of `a` and `b` on `grid` agree elementwise within `tol`.
pub fn numeric_equiv(a: &KernelExpr, b: &KernelExpr, grid: &[f64], tol: f64) -> bool {
    max_gram_diff(a, b, grid) <= tol
}

/// Largest elementwise Gram difference on `grid`.
pub fn max_gram_diff(a: &KernelExpr, b: &KernelExpr, grid: &[f64]) -> f64 {
    let ga = gram(a, grid, grid);
    let gb = gram(b, grid, grid);
    ga.iter()
        .zip(gb.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
