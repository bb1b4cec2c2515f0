//! Arithmetic expressions in t, x, y for user-supplied data.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use dampde::time::TimeFunction;
use meval::{ContextProvider, Expr, FuncEvalError};

struct Point {
    t: f64,
    x: f64,
    y: f64,
}

impl ContextProvider for Point {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "t" => Some(self.t),
            "x" => Some(self.x),
            "y" => Some(self.y),
            "pi" => Some(PI),
            "e" => Some(E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let f: fn(f64) -> f64 = match name {
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            "exp" => f64::exp,
            "ln" => f64::ln,
            "sqrt" => f64::sqrt,
            "abs" => f64::abs,
            "sinh" => f64::sinh,
            "cosh" => f64::cosh,
            "tanh" => f64::tanh,
            _ => return Err(FuncEvalError::UnknownFunction),
        };
        match args.len() {
            1 => Ok(f(args[0])),
            0 => Err(FuncEvalError::TooFewArguments),
            _ => Err(FuncEvalError::TooManyArguments),
        }
    }
}

/// Parses `src` into a function of (t, x, y). Variables: t, x, y, pi, e.
/// Functions: sin, cos, tan, exp, ln, sqrt, abs, sinh, cosh, tanh.
pub fn compile(src: &str) -> Result<TimeFunction, String> {
    let expr: Expr = src.parse().map_err(|e: meval::Error| e.to_string())?;
    expr.eval_with_context(Point {
        t: 0.25,
        x: 0.5,
        y: 0.75,
    })
    .map_err(|e| e.to_string())?;
    let expr = Arc::new(expr);
    let uses_t = depends_on_t(&expr);
    let f = move |t: f64, x: f64, y: f64| {
        expr.eval_with_context(Point { t, x, y })
            .unwrap_or(f64::NAN)
    };
    Ok(if uses_t {
        TimeFunction::new(f)
    } else {
        TimeFunction::stationary(move |x, y| f(0.0, x, y))
    })
}

fn depends_on_t(expr: &Expr) -> bool {
    // a variable named t shows up as an unknown once t is withheld
    struct NoT;
    impl ContextProvider for NoT {
        fn get_var(&self, name: &str) -> Option<f64> {
            Point {
                t: 0.0,
                x: 0.5,
                y: 0.5,
            }
            .get_var(name)
            .filter(|_| name != "t")
        }
        fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
            Point {
                t: 0.0,
                x: 0.5,
                y: 0.5,
            }
            .eval_func(name, args)
        }
    }
    matches!(expr.eval_with_context(NoT), Err(meval::Error::UnknownVariable(ref v)) if v == "t")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_builtins() {
        let f = compile("sin(pi*x)*sin(pi*y)*exp(t)").unwrap();
        let v = f.eval(1.0, 0.5, 0.5);
        assert!((v - E).abs() < 1e-14);
        assert!(!f.is_time_independent());
        let g = compile("x + 2*y").unwrap();
        assert!(g.is_time_independent());
        assert_eq!(g.eval(3.0, 1.0, 2.0), 5.0);
        assert_eq!(compile("0").unwrap().eval(0.0, 0.3, 0.3), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compile("sin(").is_err());
        assert!(compile("z + 1").is_err());
        assert!(compile("foo(x)").is_err());
    }
}
