//! Compositional kernel expressions.
//!
//! A [`KernelExpr`] is a tree over the five base kernels (WN, C, LIN, SE, PER)
//! combined with `+`, `*`, change points (CP) and change windows (CW). Every
//! node carries its hyperparameters inline, so an expression is a complete,
//! evaluable covariance function.
//!
//! The text form is documented in `docs/kernel-syntax.md`; see [`parse`] and
//! [`render`].

mod describe;
mod parse;
mod render;

pub use describe::describe;
pub use parse::{parse, parse_with_defaults, ParseDefaults};
pub use render::{render, render_structure};

use crate::algebra::{Side, SigmoidFactor, Weight};
use crate::error::{Error, Result};

/// Hyperparameters of one base kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseKernel {
    /// `variance * delta(x, x')`
    WhiteNoise { variance: f64 },
    /// `variance`
    Constant { variance: f64 },
    /// `variance * (x - offset) * (x' - offset)`
    Linear { variance: f64, offset: f64 },
    /// `variance * exp(-(x - x')^2 / (2 lengthscale^2))`
    SquaredExp { variance: f64, lengthscale: f64 },
    /// Zero-mean periodic kernel normalized so that `k(x, x) = variance`.
    Periodic {
        variance: f64,
        lengthscale: f64,
        period: f64,
    },
}

/// The five base kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseKind {
    WhiteNoise,
    Constant,
    Linear,
    SquaredExp,
    Periodic,
}

impl BaseKind {
    pub const ALL: [BaseKind; 5] = [
        BaseKind::WhiteNoise,
        BaseKind::Constant,
        BaseKind::Linear,
        BaseKind::SquaredExp,
        BaseKind::Periodic,
    ];

    /// Surface-syntax identifier.
    pub fn name(self) -> &'static str {
        match self {
            BaseKind::WhiteNoise => "WN",
            BaseKind::Constant => "C",
            BaseKind::Linear => "LIN",
            BaseKind::SquaredExp => "SE",
            BaseKind::Periodic => "PER",
        }
    }

    pub fn from_name(name: &str) -> Option<BaseKind> {
        BaseKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Kernel with unit variance, unit lengthscale/period and zero offset.
    pub fn default_kernel(self) -> BaseKernel {
        match self {
            BaseKind::WhiteNoise => BaseKernel::WhiteNoise { variance: 1.0 },
            BaseKind::Constant => BaseKernel::Constant { variance: 1.0 },
            BaseKind::Linear => BaseKernel::Linear {
                variance: 1.0,
                offset: 0.0,
            },
            BaseKind::SquaredExp => BaseKernel::SquaredExp {
                variance: 1.0,
                lengthscale: 1.0,
            },
            BaseKind::Periodic => BaseKernel::Periodic {
                variance: 1.0,
                lengthscale: 1.0,
                period: 1.0,
            },
        }
    }

    /// True for kernels whose value depends only on `x - x'`.
    pub fn is_stationary(self) -> bool {
        !matches!(self, BaseKind::Linear)
    }
}

impl BaseKernel {
    pub fn kind(&self) -> BaseKind {
        match self {
            BaseKernel::WhiteNoise { .. } => BaseKind::WhiteNoise,
            BaseKernel::Constant { .. } => BaseKind::Constant,
            BaseKernel::Linear { .. } => BaseKind::Linear,
            BaseKernel::SquaredExp { .. } => BaseKind::SquaredExp,
            BaseKernel::Periodic { .. } => BaseKind::Periodic,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            BaseKernel::WhiteNoise { variance }
            | BaseKernel::Constant { variance }
            | BaseKernel::Linear { variance, .. }
            | BaseKernel::SquaredExp { variance, .. }
            | BaseKernel::Periodic { variance, .. } => variance,
        }
    }

    pub fn with_variance(mut self, value: f64) -> BaseKernel {
        match &mut self {
            BaseKernel::WhiteNoise { variance }
            | BaseKernel::Constant { variance }
            | BaseKernel::Linear { variance, .. }
            | BaseKernel::SquaredExp { variance, .. }
            | BaseKernel::Periodic { variance, .. } => *variance = value,
        }
        self
    }

    /// `(name, value, kind)` in canonical order.
    pub fn params(&self) -> Vec<(&'static str, f64, ParamKind)> {
        use ParamKind::*;
        match *self {
            BaseKernel::WhiteNoise { variance } | BaseKernel::Constant { variance } => {
                vec![("variance", variance, Positive)]
            }
            BaseKernel::Linear { variance, offset } => {
                vec![("variance", variance, Positive), ("offset", offset, Real)]
            }
            BaseKernel::SquaredExp {
                variance,
                lengthscale,
            } => vec![
                ("variance", variance, Positive),
                ("lengthscale", lengthscale, Positive),
            ],
            BaseKernel::Periodic {
                variance,
                lengthscale,
                period,
            } => vec![
                ("variance", variance, Positive),
                ("lengthscale", lengthscale, Positive),
                ("period", period, Positive),
            ],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        match self {
            BaseKernel::WhiteNoise { variance } | BaseKernel::Constant { variance } => {
                vec![variance]
            }
            BaseKernel::Linear { variance, offset } => vec![variance, offset],
            BaseKernel::SquaredExp {
                variance,
                lengthscale,
            } => vec![variance, lengthscale],
            BaseKernel::Periodic {
                variance,
                lengthscale,
                period,
            } => vec![variance, lengthscale, period],
        }
    }

    /// Overwrite the named hyperparameter. Returns false for names the kernel lacks.
    pub fn set_param(&mut self, name: &str, value: f64) -> bool {
        let names: Vec<_> = self.params().into_iter().map(|(n, _, _)| n).collect();
        match names.iter().position(|n| *n == name) {
            Some(i) => {
                *self.params_mut()[i] = value;
                true
            }
            None => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value, kind) in self.params() {
            check_param(name, value, kind)?;
        }
        Ok(())
    }
}

/// How a hyperparameter is constrained; drives the optimizer's reparameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Strictly positive; optimized in log space.
    Positive,
    /// Any finite real.
    Real,
    /// Must exceed the hyperparameter immediately before it (a window start).
    AfterPrevious,
}

/// One entry of [`KernelExpr::hyperparams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparam {
    /// Child-index path from the root, e.g. `/0/1`; the root is `/`.
    pub path: String,
    pub name: &'static str,
    pub value: f64,
    pub kind: ParamKind,
}

/// A compositional kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    Base(BaseKernel),
    Sum(Vec<KernelExpr>),
    Product(Vec<KernelExpr>),
    /// `s(x) left s(x') + (1 - s(x)) right (1 - s(x'))` with
    /// `s(x) = (1 + tanh((location - x) / steepness)) / 2`.
    ChangePoint {
        left: Box<KernelExpr>,
        right: Box<KernelExpr>,
        location: f64,
        steepness: f64,
    },
    /// `w(x) inside w(x') + (1 - w(x)) outside (1 - w(x'))` where `w` is close
    /// to one on `[start, end]` and close to zero away from it.
    ChangeWindow {
        inside: Box<KernelExpr>,
        outside: Box<KernelExpr>,
        start: f64,
        end: f64,
        steepness: f64,
    },
    /// `g(x) inner(x, x') g(x')` for a fixed weight function `g`.
    ///
    /// Produced by expanding CP/CW nodes; also accepted by the parser so that
    /// expanded and canonical forms can be written down.
    Weighted {
        weight: Weight,
        inner: Box<KernelExpr>,
    },
}

pub const DEFAULT_STEEPNESS: f64 = 1.0;
pub const DEFAULT_LOCATION: f64 = 0.0;
pub const DEFAULT_WINDOW: (f64, f64) = (0.0, 1.0);

impl KernelExpr {
    pub fn base(kind: BaseKind) -> KernelExpr {
        KernelExpr::Base(kind.default_kernel())
    }

    /// Sum that flattens nested sums and unwraps a single child.
    pub fn sum_of(children: Vec<KernelExpr>) -> KernelExpr {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c {
                KernelExpr::Sum(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            KernelExpr::Sum(flat)
        }
    }

    /// Product that flattens nested products and unwraps a single child.
    pub fn product_of(children: Vec<KernelExpr>) -> KernelExpr {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c {
                KernelExpr::Product(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            KernelExpr::Product(flat)
        }
    }

    pub fn change_point(left: KernelExpr, right: KernelExpr, location: f64) -> KernelExpr {
        KernelExpr::ChangePoint {
            left: Box::new(left),
            right: Box::new(right),
            location,
            steepness: DEFAULT_STEEPNESS,
        }
    }

    pub fn change_window(inside: KernelExpr, outside: KernelExpr, start: f64, end: f64) -> KernelExpr {
        KernelExpr::ChangeWindow {
            inside: Box::new(inside),
            outside: Box::new(outside),
            start,
            end,
            steepness: DEFAULT_STEEPNESS,
        }
    }

    pub fn weighted(weight: Weight, inner: KernelExpr) -> KernelExpr {
        KernelExpr::Weighted {
            weight,
            inner: Box::new(inner),
        }
    }

    pub fn children(&self) -> Vec<&KernelExpr> {
        match self {
            KernelExpr::Base(_) => vec![],
            KernelExpr::Sum(c) | KernelExpr::Product(c) => c.iter().collect(),
            KernelExpr::ChangePoint { left, right, .. } => vec![left, right],
            KernelExpr::ChangeWindow {
                inside, outside, ..
            } => vec![inside, outside],
            KernelExpr::Weighted { inner, .. } => vec![inner],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut KernelExpr> {
        match self {
            KernelExpr::Base(_) => vec![],
            KernelExpr::Sum(c) | KernelExpr::Product(c) => c.iter_mut().collect(),
            KernelExpr::ChangePoint { left, right, .. } => vec![left, right],
            KernelExpr::ChangeWindow {
                inside, outside, ..
            } => vec![inside, outside],
            KernelExpr::Weighted { inner, .. } => vec![inner],
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// True if any CP or CW node is present.
    pub fn has_changes(&self) -> bool {
        matches!(
            self,
            KernelExpr::ChangePoint { .. } | KernelExpr::ChangeWindow { .. }
        ) || self.children().iter().any(|c| c.has_changes())
    }

    /// Base kernels in pre-order.
    pub fn leaves(&self) -> Vec<&BaseKernel> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a KernelExpr, out: &mut Vec<&'a BaseKernel>) {
            if let KernelExpr::Base(b) = e {
                out.push(b);
            }
            for c in e.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Parameters owned by this node itself (not its children).
    fn own_params(&self) -> Vec<(&'static str, f64, ParamKind)> {
        use ParamKind::*;
        match self {
            KernelExpr::Base(b) => b.params(),
            KernelExpr::Sum(_) | KernelExpr::Product(_) => vec![],
            KernelExpr::ChangePoint {
                location,
                steepness,
                ..
            } => vec![("location", *location, Real), ("steepness", *steepness, Positive)],
            KernelExpr::ChangeWindow {
                start,
                end,
                steepness,
                ..
            } => vec![
                ("start", *start, Real),
                ("end", *end, AfterPrevious),
                ("steepness", *steepness, Positive),
            ],
            KernelExpr::Weighted { weight, .. } => weight.params(),
        }
    }

    fn own_params_mut(&mut self) -> Vec<&mut f64> {
        match self {
            KernelExpr::Base(b) => b.params_mut(),
            KernelExpr::Sum(_) | KernelExpr::Product(_) => vec![],
            KernelExpr::ChangePoint {
                location,
                steepness,
                ..
            } => vec![location, steepness],
            KernelExpr::ChangeWindow {
                start,
                end,
                steepness,
                ..
            } => vec![start, end, steepness],
            KernelExpr::Weighted { weight, .. } => weight.params_mut(),
        }
    }

    /// Every hyperparameter in deterministic pre-order (node before children).
    pub fn hyperparams(&self) -> Vec<Hyperparam> {
        let mut out = Vec::new();
        fn walk(e: &KernelExpr, path: &mut Vec<usize>, out: &mut Vec<Hyperparam>) {
            let path_str = if path.is_empty() {
                "/".to_string()
            } else {
                path.iter().map(|i| format!("/{i}")).collect()
            };
            for (name, value, kind) in e.own_params() {
                out.push(Hyperparam {
                    path: path_str.clone(),
                    name,
                    value,
                    kind,
                });
            }
            for (i, c) in e.children().into_iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn num_hyperparams(&self) -> usize {
        self.own_params().len()
            + self
                .children()
                .iter()
                .map(|c| c.num_hyperparams())
                .sum::<usize>()
    }

    /// Copy of the expression with hyperparameters replaced, in [`hyperparams`](Self::hyperparams) order.
    ///
    /// Values are not validated; call [`validate`](Self::validate) if they come from outside.
    pub fn with_hyperparams(&self, values: &[f64]) -> Result<KernelExpr> {
        let expected = self.num_hyperparams();
        if values.len() != expected {
            return Err(Error::MalformedExpr(format!(
                "expected {expected} hyperparameters, got {}",
                values.len()
            )));
        }
        let mut out = self.clone();
        let mut it = values.iter();
        fn walk<'a>(e: &mut KernelExpr, it: &mut impl Iterator<Item = &'a f64>) {
            for slot in e.own_params_mut() {
                *slot = *it.next().unwrap();
            }
            for c in e.children_mut() {
                walk(c, it);
            }
        }
        walk(&mut out, &mut it);
        Ok(out)
    }

    /// Check every structural and hyperparameter invariant.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelExpr::Sum(c) | KernelExpr::Product(c) if c.len() < 2 => {
                return Err(Error::MalformedExpr(format!(
                    "sum/product needs at least two operands, found {}",
                    c.len()
                )))
            }
            KernelExpr::ChangeWindow { start, end, .. } if !(start < end) => {
                return Err(Error::InvalidWindow {
                    start: *start,
                    end: *end,
                })
            }
            KernelExpr::Weighted {
                weight: Weight::OutsideWindow { start, end, .. },
                ..
            } if !(start < end) => {
                return Err(Error::InvalidWindow {
                    start: *start,
                    end: *end,
                })
            }
            _ => {}
        }
        for (name, value, kind) in self.own_params() {
            check_param(name, value, kind)?;
        }
        for c in self.children() {
            c.validate()?;
        }
        Ok(())
    }

    /// Move CP locations and CW windows that still hold their fixed defaults
    /// onto the given time range: CP at the midpoint, CW over the middle third.
    pub fn bind_change_defaults(&self, lo: f64, hi: f64) -> KernelExpr {
        let mut out = self.clone();
        fn walk(e: &mut KernelExpr, lo: f64, hi: f64) {
            match e {
                KernelExpr::ChangePoint { location, .. } if *location == DEFAULT_LOCATION => {
                    *location = 0.5 * (lo + hi);
                }
                KernelExpr::ChangeWindow { start, end, .. }
                    if (*start, *end) == DEFAULT_WINDOW =>
                {
                    *start = lo + (hi - lo) / 3.0;
                    *end = lo + 2.0 * (hi - lo) / 3.0;
                }
                _ => {}
            }
            for c in e.children_mut() {
                walk(c, lo, hi);
            }
        }
        walk(&mut out, lo, hi);
        out
    }
}

fn check_param(name: &'static str, value: f64, kind: ParamKind) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidHyperparameter {
            name: name.to_string(),
            value,
            reason: "must be finite",
        });
    }
    if kind == ParamKind::Positive && value <= 0.0 {
        return Err(Error::InvalidHyperparameter {
            name: name.to_string(),
            value,
            reason: "must be positive",
        });
    }
    Ok(())
}

impl Weight {
    pub(crate) fn params(&self) -> Vec<(&'static str, f64, ParamKind)> {
        use ParamKind::*;
        match *self {
            Weight::Sigmoid(SigmoidFactor {
                location,
                steepness,
                ..
            }) => vec![("location", location, Real), ("steepness", steepness, Positive)],
            Weight::OutsideWindow {
                start,
                end,
                steepness,
            } => vec![
                ("start", start, Real),
                ("end", end, AfterPrevious),
                ("steepness", steepness, Positive),
            ],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        match self {
            Weight::Sigmoid(SigmoidFactor {
                location,
                steepness,
                ..
            }) => vec![location, steepness],
            Weight::OutsideWindow {
                start,
                end,
                steepness,
            } => vec![start, end, steepness],
        }
    }

    /// Surface-syntax wrapper name.
    pub fn keyword(&self) -> &'static str {
        match self {
            Weight::Sigmoid(SigmoidFactor {
                side: Side::Before,
                ..
            }) => "BEFORE",
            Weight::Sigmoid(SigmoidFactor {
                side: Side::After, ..
            }) => "AFTER",
            Weight::OutsideWindow { .. } => "OUTSIDE",
        }
    }
}

impl std::fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&render(self))
    }
}

impl std::str::FromStr for KernelExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<KernelExpr> {
        parse(s)
    }
}
