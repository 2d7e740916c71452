//! Constant evaluation of port ranges and parameter values.

use std::collections::BTreeMap;

use crate::model::BitWidth;

/// Parameter name → evaluated integer value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamEnv {
    pub bindings: BTreeMap<String, i64>,
}

impl ParamEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: i64) {
        self.bindings.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.bindings.get(name).copied()
    }
}

impl<const N: usize> From<[(&str, i64); N]> for ParamEnv {
    fn from(pairs: [(&str, i64); N]) -> Self {
        let mut env = ParamEnv::new();
        for (k, v) in pairs {
            env.bind(k, v);
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(i64),
    Ident(String),
    Op(char),
}

fn lex(expr: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = expr.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                i += 1;
            }
            // A following quote means a based/sized literal, which is not a
            // plain decimal.
            if chars.get(i) == Some(&'\'') {
                return None;
            }
            let digits: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            toks.push(Tok::Num(digits.parse().ok()?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                i += 1;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if matches!(c, '+' | '-' | '*' | '(' | ')') {
            toks.push(Tok::Op(c));
            i += 1;
        } else {
            return None;
        }
    }
    Some(toks)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    env: &'a ParamEnv,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn expr(&mut self) -> Option<i64> {
        let mut acc = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' {
                acc.checked_add(rhs)?
            } else {
                acc.checked_sub(rhs)?
            };
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<i64> {
        let mut acc = self.unary()?;
        while let Some(Tok::Op('*')) = self.peek() {
            self.pos += 1;
            acc = acc.checked_mul(self.unary()?)?;
        }
        Some(acc)
    }

    fn unary(&mut self) -> Option<i64> {
        match self.peek()?.clone() {
            Tok::Op('-') => {
                self.pos += 1;
                self.unary()?.checked_neg()
            }
            Tok::Op('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Option<i64> {
        let tok = self.peek()?.clone();
        self.pos += 1;
        match tok {
            Tok::Num(n) => Some(n),
            Tok::Ident(name) => self.env.get(&name),
            Tok::Op('(') => {
                let v = self.expr()?;
                (self.peek() == Some(&Tok::Op(')'))).then(|| self.pos += 1)?;
                Some(v)
            }
            Tok::Op(_) => None,
        }
    }
}

/// Evaluates an integer expression over `+ - *`, parentheses, decimal
/// literals and bound parameters. `None` on anything else.
pub fn eval_const(expr: &str, env: &ParamEnv) -> Option<i64> {
    let toks = lex(expr)?;
    if toks.is_empty() {
        return None;
    }
    let mut parser = Parser { toks, pos: 0, env };
    let value = parser.expr()?;
    (parser.pos == parser.toks.len()).then_some(value)
}

/// Width of a `[H:L]` range: `|H - L| + 1`. The brackets are optional.
/// Anything that does not evaluate yields `Unresolved` with the input text.
pub fn resolve_width(range: &str, env: &ParamEnv) -> BitWidth {
    let unresolved = || BitWidth::Unresolved(range.trim().to_string());
    let inner = range.trim();
    let inner = inner
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(inner);
    let mut parts = inner.split(':');
    let (Some(hi), Some(lo), None) = (parts.next(), parts.next(), parts.next()) else {
        return unresolved();
    };
    let (Some(hi), Some(lo)) = (eval_const(hi, env), eval_const(lo, env)) else {
        return unresolved();
    };
    hi.checked_sub(lo)
        .and_then(|d| d.checked_abs())
        .and_then(|d| d.checked_add(1))
        .and_then(|w| u32::try_from(w).ok())
        .map_or_else(unresolved, BitWidth::Resolved)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_ranges() {
        let env = ParamEnv::new();
        assert_eq!(resolve_width("[7:0]", &env), BitWidth::Resolved(8));
        assert_eq!(resolve_width("[0:7]", &env), BitWidth::Resolved(8));
        assert_eq!(resolve_width("[ 15 : 0 ]", &env), BitWidth::Resolved(16));
        assert_eq!(resolve_width("[3:3]", &env), BitWidth::Resolved(1));
    }

    #[test]
    fn parameter_ranges() {
        assert_eq!(
            resolve_width("[WIDTH-1:0]", &ParamEnv::from([("WIDTH", 8)])),
            BitWidth::Resolved(8)
        );
        // 2*4-1 = 7 → 7-0+1
        assert_eq!(
            resolve_width("[2*W-1:0]", &ParamEnv::from([("W", 4)])),
            BitWidth::Resolved(8)
        );
        assert_eq!(
            resolve_width("[(A+B)*2-1:A]", &ParamEnv::from([("A", 2), ("B", 3)])),
            BitWidth::Resolved(8)
        );
    }

    #[test]
    fn unresolvable_ranges_keep_text() {
        let env = ParamEnv::new();
        assert_eq!(
            resolve_width("[`BUS-1:0]", &env),
            BitWidth::Unresolved("[`BUS-1:0]".into())
        );
        assert_eq!(
            resolve_width("[N-1:0]", &env),
            BitWidth::Unresolved("[N-1:0]".into())
        );
        assert_eq!(
            resolve_width("[$clog2(D)-1:0]", &env),
            BitWidth::Unresolved("[$clog2(D)-1:0]".into())
        );
        assert_eq!(
            resolve_width("[8/2:0]", &env),
            BitWidth::Unresolved("[8/2:0]".into())
        );
        assert_eq!(
            resolve_width("[i+:8]", &env),
            BitWidth::Unresolved("[i+:8]".into())
        );
        assert_eq!(
            resolve_width("[4'd7:0]", &env),
            BitWidth::Unresolved("[4'd7:0]".into())
        );
    }

    #[test]
    fn eval_precedence_and_unary() {
        let env = ParamEnv::new();
        assert_eq!(eval_const("2+3*4", &env), Some(14));
        assert_eq!(eval_const("-(2+3)*4", &env), Some(-20));
        assert_eq!(eval_const("1_000", &env), Some(1000));
        assert_eq!(eval_const("(1", &env), None);
        assert_eq!(eval_const("1 2", &env), None);
        assert_eq!(eval_const("", &env), None);
    }
}
