use super::{KernelExpr, DEFAULT_LOCATION, DEFAULT_STEEPNESS, DEFAULT_WINDOW};
use crate::algebra::Weight;

/// Canonical surface text; hyperparameters appear only where they differ from
/// the defaults. `parse(&render(e)) == e` for every valid expression.
pub fn render(expr: &KernelExpr) -> String {
    let mut out = String::new();
    write_expr(expr, &mut out, true);
    out
}

/// Text with base-kernel hyperparameters stripped; change locations and
/// weights are kept. Used as a structural identity key.
pub fn render_structure(expr: &KernelExpr) -> String {
    let mut out = String::new();
    write_expr(expr, &mut out, false);
    out
}

fn write_expr(expr: &KernelExpr, out: &mut String, base_params: bool) {
    match expr {
        KernelExpr::Base(b) => {
            out.push_str(b.kind().name());
            if base_params {
                let defaults = b.kind().default_kernel().params();
                let list: Vec<_> = b
                    .params()
                    .into_iter()
                    .zip(defaults)
                    .filter(|((_, v, _), (_, d, _))| v != d)
                    .map(|((n, v, _), _)| (n, v))
                    .collect();
                write_params(out, &list);
            }
        }
        KernelExpr::Sum(children) => {
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" + ");
                }
                let wrap = matches!(c, KernelExpr::Sum(_));
                write_group(c, out, wrap, base_params);
            }
        }
        KernelExpr::Product(children) => {
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" * ");
                }
                let wrap = matches!(c, KernelExpr::Sum(_) | KernelExpr::Product(_));
                write_group(c, out, wrap, base_params);
            }
        }
        KernelExpr::ChangePoint {
            left,
            right,
            location,
            steepness,
        } => {
            out.push_str("CP(");
            write_expr(left, out, base_params);
            out.push_str(", ");
            write_expr(right, out, base_params);
            out.push(')');
            let mut list = Vec::new();
            if *location != DEFAULT_LOCATION {
                list.push(("location", *location));
            }
            if *steepness != DEFAULT_STEEPNESS {
                list.push(("steepness", *steepness));
            }
            write_params(out, &list);
        }
        KernelExpr::ChangeWindow {
            inside,
            outside,
            start,
            end,
            steepness,
        } => {
            out.push_str("CW(");
            write_expr(inside, out, base_params);
            out.push_str(", ");
            write_expr(outside, out, base_params);
            out.push(')');
            write_params(out, &window_params(*start, *end, *steepness));
        }
        KernelExpr::Weighted { weight, inner } => {
            out.push_str(weight.keyword());
            out.push('(');
            write_expr(inner, out, base_params);
            out.push(')');
            let list = match *weight {
                Weight::Sigmoid(f) => {
                    let mut list = Vec::new();
                    if f.location != DEFAULT_LOCATION {
                        list.push(("location", f.location));
                    }
                    if f.steepness != DEFAULT_STEEPNESS {
                        list.push(("steepness", f.steepness));
                    }
                    list
                }
                Weight::OutsideWindow {
                    start,
                    end,
                    steepness,
                } => window_params(start, end, steepness),
            };
            write_params(out, &list);
        }
    }
}

fn window_params(start: f64, end: f64, steepness: f64) -> Vec<(&'static str, f64)> {
    let mut list = Vec::new();
    if start != DEFAULT_WINDOW.0 {
        list.push(("start", start));
    }
    if end != DEFAULT_WINDOW.1 {
        list.push(("end", end));
    }
    if steepness != DEFAULT_STEEPNESS {
        list.push(("steepness", steepness));
    }
    list
}

fn write_group(e: &KernelExpr, out: &mut String, wrap: bool, base_params: bool) {
    if wrap {
        out.push('(');
    }
    write_expr(e, out, base_params);
    if wrap {
        out.push(')');
    }
}

fn write_params(out: &mut String, list: &[(&str, f64)]) {
    if list.is_empty() {
        return;
    }
    out.push('[');
    for (i, (name, value)) in list.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        // `Display` for f64 is the shortest text that parses back to the same bits.
        out.push_str(&format!("{name}={value}"));
    }
    out.push(']');
}
