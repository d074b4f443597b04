//! String expressions over `x`, `y`, `t` (and a scalar `s` for reaction terms).
//!
//! Parsing and evaluation are delegated to `meval`; the grammar covers
//! `+ - * / ^`, parentheses, numeric literals, `pi`, and the functions
//! `sin cos exp abs min max` (plus the rest of meval's builtins).

use std::fmt;

use meval::{Context, Expr};

use crate::error::{Error, Result};

fn expr_error(text: &str, reason: impl fmt::Display) -> Error {
    Error::Expression {
        expr: text.to_string(),
        reason: reason.to_string(),
    }
}

fn context(params: &[(String, f64)]) -> Context<'static> {
    let mut ctx = Context::new();
    for (name, value) in params {
        ctx.var(name.clone(), *value);
    }
    ctx
}

/// A parsed function of `(x, y, t)`, optionally with named constant parameters
/// such as a family scale `s` or a sequence index `k`.
#[derive(Clone)]
pub struct SpaceTimeExpr {
    text: String,
    params: Vec<(String, f64)>,
    expr: Expr,
}

impl SpaceTimeExpr {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text`, binding every name in `params` to a constant.
    pub fn parse_with(text: &str, params: &[(&str, f64)]) -> Result<Self> {
        let expr: Expr = text.parse().map_err(|e| expr_error(text, e))?;
        let params: Vec<(String, f64)> = params.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        let parsed = Self {
            text: text.to_string(),
            params,
            expr,
        };
        // binding checks that no unknown variable is referenced
        let f = parsed.bind()?;
        let probe = f(0.25, 0.5, 0.0);
        if probe.is_nan() {
            return Err(expr_error(text, "evaluates to NaN at (0.25, 0.5, 0)"));
        }
        Ok(parsed)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    /// Returns an evaluator `(x, y, t) -> value`.
    pub fn bind(&self) -> Result<impl Fn(f64, f64, f64) -> f64> {
        self.expr
            .clone()
            .bind3_with_context(context(&self.params), "x", "y", "t")
            .map_err(|e| expr_error(&self.text, e))
    }
}

impl fmt::Debug for SpaceTimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceTimeExpr")
            .field("text", &self.text)
            .field("params", &self.params)
            .finish()
    }
}

/// A parsed scalar function of `s`.
#[derive(Clone)]
pub struct ScalarExpr {
    text: String,
    expr: Expr,
}

impl ScalarExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let expr: Expr = text.parse().map_err(|e| expr_error(text, e))?;
        let parsed = Self {
            text: text.to_string(),
            expr,
        };
        let _ = parsed.bind()?;
        Ok(parsed)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn bind(&self) -> Result<impl Fn(f64) -> f64> {
        self.expr
            .clone()
            .bind_with_context(Context::new(), "s")
            .map_err(|e| expr_error(&self.text, e))
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarExpr")
            .field("text", &self.text)
            .finish()
    }
}
