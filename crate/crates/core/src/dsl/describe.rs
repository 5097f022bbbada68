use super::{BaseKind, KernelExpr};
use crate::algebra::{Side, Weight};

/// Short English phrase for an expression, built from a fixed lexicon.
///
/// `SE * LIN` reads "a smooth function with linearly (LIN) increasing amplitude".
pub fn describe(expr: &KernelExpr) -> String {
    match expr {
        KernelExpr::Base(b) => noun(b.kind()).to_string(),
        KernelExpr::Sum(children) => children
            .iter()
            .map(describe)
            .collect::<Vec<_>>()
            .join(" plus "),
        KernelExpr::Product(children) => describe_product(children),
        KernelExpr::ChangePoint {
            left,
            right,
            location,
            ..
        } => format!(
            "{} with a change at {} to {}",
            describe(left),
            number(*location),
            describe(right)
        ),
        KernelExpr::ChangeWindow {
            inside,
            outside,
            start,
            end,
            ..
        } => format!(
            "{} with a change between {} and {} to {}",
            describe(outside),
            number(*start),
            number(*end),
            describe(inside)
        ),
        KernelExpr::Weighted { weight, inner } => {
            let restriction = match weight {
                Weight::Sigmoid(f) => match f.side {
                    Side::Before => format!("before {}", number(f.location)),
                    Side::After => format!("after {}", number(f.location)),
                },
                Weight::OutsideWindow { start, end, .. } => {
                    format!("outside {} to {}", number(*start), number(*end))
                }
            };
            format!("{} {}", describe(inner), restriction)
        }
    }
}

fn noun(kind: BaseKind) -> &'static str {
    match kind {
        BaseKind::SquaredExp => "a smooth function",
        BaseKind::Periodic => "a periodic function",
        BaseKind::Linear => "a linear function",
        BaseKind::WhiteNoise => "uncorrelated noise",
        BaseKind::Constant => "a constant",
    }
}

fn describe_product(factors: &[KernelExpr]) -> String {
    let kinds: Vec<Option<BaseKind>> = factors
        .iter()
        .map(|f| match f {
            KernelExpr::Base(b) => Some(b.kind()),
            _ => None,
        })
        .collect();
    let count = |k: BaseKind| kinds.iter().filter(|x| **x == Some(k)).count();
    let n_lin = count(BaseKind::Linear);
    let n_se = count(BaseKind::SquaredExp);
    let n_per = count(BaseKind::Periodic);
    let compound: Vec<&KernelExpr> = factors
        .iter()
        .zip(&kinds)
        .filter(|(_, k)| k.is_none())
        .map(|(f, _)| f)
        .collect();

    let mut modifiers = Vec::new();
    let head = if count(BaseKind::WhiteNoise) > 0 {
        "uncorrelated noise".to_string()
    } else if n_se > 0 {
        if n_per > 0 {
            modifiers.push("modulated by a periodic function".to_string());
        }
        noun(BaseKind::SquaredExp).to_string()
    } else if n_per > 0 {
        noun(BaseKind::Periodic).to_string()
    } else if let Some((first, rest)) = compound.split_first().filter(|_| n_lin == 0) {
        // all factors are compound or constant; describe the first one as the head
        for c in rest {
            modifiers.push(format!("multiplied by ({})", describe(c)));
        }
        return join_head(format!("({})", describe(first)), modifiers);
    } else if n_lin == 1 {
        return with_compounds(noun(BaseKind::Linear).to_string(), &compound);
    } else if n_lin > 1 {
        return with_compounds(format!("a polynomial of degree {n_lin}"), &compound);
    } else {
        noun(BaseKind::Constant).to_string()
    };
    for c in &compound {
        modifiers.push(format!("multiplied by ({})", describe(c)));
    }
    match n_lin {
        0 => {}
        1 => modifiers.push("with linearly (LIN) increasing amplitude".to_string()),
        _ => modifiers.push("with polynomially increasing amplitude".to_string()),
    }
    join_head(head, modifiers)
}

fn with_compounds(head: String, compound: &[&KernelExpr]) -> String {
    let modifiers = compound
        .iter()
        .map(|c| format!("multiplied by ({})", describe(c)))
        .collect();
    join_head(head, modifiers)
}

fn join_head(head: String, modifiers: Vec<String>) -> String {
    std::iter::once(head)
        .chain(modifiers)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Up to four decimals, trailing zeros trimmed.
fn number(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn d(text: &str) -> String {
        describe(&parse(text).unwrap())
    }

    #[test]
    fn smooth_with_linear_amplitude() {
        assert_eq!(
            d("SE * LIN"),
            "a smooth function with linearly (LIN) increasing amplitude"
        );
        assert_eq!(
            d("LIN * SE"),
            "a smooth function with linearly (LIN) increasing amplitude"
        );
    }

    #[test]
    fn lexicon_leaves_and_sums() {
        assert_eq!(d("WN"), "uncorrelated noise");
        assert_eq!(d("SE + PER"), "a smooth function plus a periodic function");
        assert_eq!(d("C"), "a constant");
        assert_eq!(d("LIN * LIN"), "a polynomial of degree 2");
        assert_eq!(d("C * LIN"), "a linear function");
    }

    #[test]
    fn changes_mention_locations() {
        assert_eq!(
            d("CP(SE, LIN)[location=2.5]"),
            "a smooth function with a change at 2.5 to a linear function"
        );
        assert_eq!(
            d("CW(SE, C)[start=1, end=3]"),
            "a constant with a change between 1 and 3 to a smooth function"
        );
        assert_eq!(d("AFTER(SE)[location=1]"), "a smooth function after 1");
    }

    #[test]
    fn products_with_compound_factors() {
        assert_eq!(
            d("(SE + C) * LIN"),
            "a linear function multiplied by (a smooth function plus a constant)"
        );
        assert_eq!(
            d("SE * PER * LIN"),
            "a smooth function modulated by a periodic function with linearly (LIN) increasing amplitude"
        );
        assert_eq!(d("WN * LIN"), "uncorrelated noise with linearly (LIN) increasing amplitude");
    }
}
