//! Reads an emitted program back and evaluates its Gram expressions.
//!
//! Only the expression subset the emitter produces is understood: literals,
//! the data vectors, kernel and sigmoid calls, `+ - * .*`, unary minus,
//! parentheses and the postfix transpose `'`.

use nalgebra::{DMatrix, DVector};

use super::{kernel_function_name, EmittedProgram, SIGMOID_FUNCTION};
use crate::algebra::SigmoidFactor;
use crate::dsl::{BaseKind, BaseKernel};
use crate::error::{Error, Result};
use crate::gp::{eval_base, eval_sigmoid, TimeSeriesDataset};

/// The quantities an emitted program computes before sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramGrams {
    pub sigma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub y1: DVector<f64>,
    pub noise: f64,
    pub jitter: f64,
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::SemanticsMismatch(msg.into())
}

impl ProgramGrams {
    pub fn evaluate(prog: &EmittedProgram, data: &TimeSeriesDataset) -> Result<ProgramGrams> {
        ProgramGrams::evaluate_text(&prog.transformed_parameters_block, data)
    }

    /// Same as [`ProgramGrams::evaluate`] on program text read from disk.
    /// `data` must hold the training and test inputs the program is run with.
    pub fn evaluate_text(block: &str, data: &TimeSeriesDataset) -> Result<ProgramGrams> {
        let env = Env {
            x1: DVector::from_column_slice(data.train_times()),
            x2: DVector::from_column_slice(data.test_times()),
            y1: DVector::from_column_slice(data.train_values()),
        };
        let matrix = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let m = env.eval(statement(block, &format!(" {name} = "))?)?.matrix()?;
            if m.shape() != (rows, cols) {
                return Err(mismatch(format!("{name} has shape {:?}, expected {:?}", m.shape(), (rows, cols))));
            }
            Ok(m)
        };
        let (n1, n2) = (data.n_train(), data.n_test());
        Ok(ProgramGrams {
            sigma: matrix("Sigma", n1, n1)?,
            omega: matrix("Omega", n2, n2)?,
            k: matrix("K", n1, n2)?,
            noise: env.eval(statement(block, "real noise = ")?)?.scalar()?,
            jitter: env.eval(statement(block, "real jitter = ")?)?.scalar()?,
            y1: env.y1.clone(),
        })
    }

    /// `mu` and `L` as the program computes them, with plain Cholesky
    /// factorizations that fail where the program would.
    pub fn mu_and_factor(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = |m: DMatrix<f64>, what: &str| {
            nalgebra::Cholesky::new(m)
                .map(|c| c.unpack())
                .ok_or_else(|| mismatch(format!("{what} is not positive definite in the emitted program")))
        };
        let mut s = self.sigma.clone();
        for i in 0..s.nrows() {
            s[(i, i)] += self.noise + self.jitter;
        }
        let l_sigma = chol(s, "Sigma")?;
        let solve = |b: &DMatrix<f64>| {
            l_sigma
                .solve_lower_triangular(b)
                .ok_or_else(|| mismatch("singular training factor"))
        };
        let v = solve(&self.k)?;
        let a = solve(&DMatrix::from_column_slice(self.y1.len(), 1, self.y1.as_slice()))?;
        let c = &self.omega - v.transpose() * &v;
        let mut c = (&c + c.transpose()) * 0.5;
        for i in 0..c.nrows() {
            c[(i, i)] += self.jitter;
        }
        let mu = (v.transpose() * a).column(0).into_owned();
        Ok((mu, chol(c, "the conditional covariance")?))
    }
}

/// Text from `marker` to the next `;`.
fn statement<'a>(block: &'a str, marker: &str) -> Result<&'a str> {
    let start = block
        .find(marker)
        .ok_or_else(|| mismatch(format!("program has no `{}` statement", marker.trim())))?
        + marker.len();
    let len = block[start..]
        .find(';')
        .ok_or_else(|| mismatch("unterminated statement"))?;
    Ok(&block[start..start + len])
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() {
                let d = bytes[i];
                let sign_after_exp = (d == b'-' || d == b'+') && matches!(bytes[i - 1], b'e' | b'E');
                if d.is_ascii_digit() || d == b'.' && !matches!(bytes.get(i + 1), Some(b'*')) || d == b'e' || d == b'E' || sign_after_exp {
                    i += 1;
                } else {
                    break;
                }
            }
            let s = &text[start..i];
            out.push(Token::Num(s.parse().map_err(|_| mismatch(format!("bad literal `{s}`")))?));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token::Ident(text[start..i].to_string()));
        } else if text[i..].starts_with(".*") {
            out.push(Token::Sym(".*"));
            i += 2;
        } else {
            let sym = match c {
                b'(' => "(",
                b')' => ")",
                b',' => ",",
                b'+' => "+",
                b'-' => "-",
                b'*' => "*",
                b'\'' => "'",
                _ => return Err(mismatch(format!("unexpected character `{}`", c as char))),
            };
            out.push(Token::Sym(sym));
            i += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Val {
    Scalar(f64),
    /// Column vectors are `n × 1`; transposed ones `1 × n`.
    Mat(DMatrix<f64>),
}

impl Val {
    fn scalar(self) -> Result<f64> {
        match self {
            Val::Scalar(v) => Ok(v),
            Val::Mat(_) => Err(mismatch("expected a scalar")),
        }
    }

    fn matrix(self) -> Result<DMatrix<f64>> {
        match self {
            Val::Mat(m) => Ok(m),
            Val::Scalar(_) => Err(mismatch("expected a matrix")),
        }
    }

    fn column(self) -> Result<Vec<f64>> {
        let m = self.matrix()?;
        if m.ncols() != 1 {
            return Err(mismatch("expected a column vector"));
        }
        Ok(m.iter().copied().collect())
    }
}

fn add(a: Val, b: Val, sign: f64) -> Result<Val> {
    Ok(match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(x + sign * y),
        (Val::Scalar(x), Val::Mat(m)) => Val::Mat(m.map(|v| x + sign * v)),
        (Val::Mat(m), Val::Scalar(y)) => Val::Mat(m.map(|v| v + sign * y)),
        (Val::Mat(m), Val::Mat(n)) => {
            if m.shape() != n.shape() {
                return Err(mismatch("shape mismatch in sum"));
            }
            Val::Mat(m + n * sign)
        }
    })
}

fn mul(a: Val, b: Val, elementwise: bool) -> Result<Val> {
    Ok(match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(x * y),
        (Val::Scalar(x), Val::Mat(m)) | (Val::Mat(m), Val::Scalar(x)) => Val::Mat(m * x),
        (Val::Mat(m), Val::Mat(n)) if elementwise => {
            if m.shape() != n.shape() {
                return Err(mismatch("shape mismatch in elementwise product"));
            }
            Val::Mat(m.component_mul(&n))
        }
        (Val::Mat(m), Val::Mat(n)) => {
            if m.ncols() != n.nrows() {
                return Err(mismatch("shape mismatch in matrix product"));
            }
            Val::Mat(m * n)
        }
    })
}

struct Env {
    x1: DVector<f64>,
    x2: DVector<f64>,
    y1: DVector<f64>,
}

impl Env {
    fn eval(&self, text: &str) -> Result<Val> {
        let tokens = tokenize(text)?;
        let mut p = Parser { env: self, tokens, pos: 0 };
        let v = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(mismatch(format!("trailing input in `{}`", text.trim())));
        }
        Ok(v)
    }

    fn variable(&self, name: &str) -> Result<Val> {
        let v = match name {
            "x1" => &self.x1,
            "x2" => &self.x2,
            "y1" => &self.y1,
            _ => return Err(mismatch(format!("unknown variable `{name}`"))),
        };
        Ok(Val::Mat(DMatrix::from_column_slice(v.len(), 1, v.as_slice())))
    }

    fn call(&self, name: &str, args: Vec<Val>) -> Result<Val> {
        if name == SIGMOID_FUNCTION {
            let [x, loc, s]: [Val; 3] = args.try_into().map_err(|_| mismatch("sigmoid takes three arguments"))?;
            let f = SigmoidFactor::before(loc.scalar()?, s.scalar()?);
            let x = x.column()?;
            return Ok(Val::Mat(DMatrix::from_iterator(x.len(), 1, x.iter().map(|&t| eval_sigmoid(&f, t)))));
        }
        let kind = BaseKind::ALL
            .into_iter()
            .find(|&k| kernel_function_name(k) == name)
            .ok_or_else(|| mismatch(format!("unknown function `{name}`")))?;
        let mut args = args.into_iter();
        let (Some(rows), Some(cols)) = (args.next(), args.next()) else {
            return Err(mismatch(format!("`{name}` needs two input vectors")));
        };
        let (rows, cols) = (rows.column()?, cols.column()?);
        let mut kernel = kind.default_kernel();
        let names: Vec<&str> = kernel.params().iter().map(|p| p.0).collect();
        let values = args.map(Val::scalar).collect::<Result<Vec<f64>>>()?;
        if values.len() != names.len() {
            return Err(mismatch(format!("`{name}` takes {} hyperparameters", names.len())));
        }
        for (n, v) in names.iter().zip(values) {
            kernel.set_param(n, v);
        }
        Ok(Val::Mat(gram_of(&kernel, &rows, &cols)))
    }
}

fn gram_of(k: &BaseKernel, rows: &[f64], cols: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| eval_base(k, rows[i], cols[j]))
}

struct Parser<'a> {
    env: &'a Env,
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser<'_> {
    fn peek_sym(&self) -> Option<&'static str> {
        match self.tokens.get(self.pos) {
            Some(Token::Sym(s)) => Some(s),
            _ => None,
        }
    }

    fn expect(&mut self, sym: &str) -> Result<()> {
        if self.peek_sym() == Some(sym) {
            self.pos += 1;
            Ok(())
        } else {
            Err(mismatch(format!("expected `{sym}`")))
        }
    }

    fn expr(&mut self) -> Result<Val> {
        let mut acc = self.term()?;
        while let Some(op @ ("+" | "-")) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = add(acc, rhs, if op == "+" { 1.0 } else { -1.0 })?;
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Val> {
        let mut acc = self.unary()?;
        while let Some(op @ ("*" | ".*")) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = mul(acc, rhs, op == ".*")?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Val> {
        if self.peek_sym() == Some("-") {
            self.pos += 1;
            return mul(Val::Scalar(-1.0), self.unary()?, false);
        }
        let mut v = self.primary()?;
        while self.peek_sym() == Some("'") {
            self.pos += 1;
            v = match v {
                Val::Mat(m) => Val::Mat(m.transpose()),
                s => s,
            };
        }
        Ok(v)
    }

    fn primary(&mut self) -> Result<Val> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| mismatch("unexpected end of expression"))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Val::Scalar(v)),
            Token::Sym("(") => {
                let v = self.expr()?;
                self.expect(")")?;
                Ok(v)
            }
            Token::Ident(name) if self.peek_sym() == Some("(") => {
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.peek_sym() == Some(",") {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(")")?;
                self.env.call(&name, args)
            }
            Token::Ident(name) => self.env.variable(&name),
            Token::Sym(s) => Err(mismatch(format!("unexpected `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env {
        Env {
            x1: DVector::from_vec(vec![0.0, 1.0]),
            x2: DVector::from_vec(vec![2.0]),
            y1: DVector::from_vec(vec![1.0, -1.0]),
        }
    }

    #[test]
    fn arithmetic_and_transpose() {
        let e = env();
        assert_eq!(e.eval("1.5e0 + -2.5e-1 * 2").unwrap().scalar().unwrap(), 1.0);
        let outer = e.eval("x1 * x1'").unwrap().matrix().unwrap();
        assert_eq!(outer, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        let had = e.eval("(1 - x1) .* x1").unwrap().matrix().unwrap();
        assert_eq!(had, DMatrix::zeros(2, 1));
    }

    #[test]
    fn kernel_calls_match_engine() {
        let e = env();
        let k = e.eval("kernel_lin(x1, x2, 2.0e0, 5.0e-1)").unwrap().matrix().unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 1, &[-1.5, 1.5]));
        assert!(e.eval("kernel_se(x1, x2, 1.0e0)").is_err());
        assert!(e.eval("kernel_xx(x1, x2)").is_err());
        assert!(e.eval("x1 + x2").is_err());
    }

    #[test]
    fn statements_are_found() {
        let block = "  matrix[N1, N1] Sigma = kernel_c(x1, x1,\n 1.0e0);\n";
        assert_eq!(statement(block, " Sigma = ").unwrap(), "kernel_c(x1, x1,\n 1.0e0)");
        assert!(statement(block, " Omega = ").is_err());
    }
}
