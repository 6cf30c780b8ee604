//! Prefix surface syntax for CSG programs.
//!
//! ```text
//! program   := expr
//! expr      := primitive | boolean | transform
//! primitive := ("rectangle" | "ellipse" | "cuboid" | "ellipsoid") "(" num ("," num)* ")"
//! boolean   := ("union" | "intersect" | "subtract") "(" expr "," expr ")"
//! transform := ("translate" | "scale" | "rotate") "(" num ("," num)* "," expr ")"
//! ```
//!
//! Whitespace is insignificant and `#` starts a comment that runs to the end of
//! the line.

use crate::ast::{BoolOp, Dim, Expr, ExprError, PrimitiveKind, TransformKind};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: {source}")]
    Invalid {
        line: usize,
        col: usize,
        source: ExprError,
    },
    #[error("program contains no primitive to infer its dimension from")]
    NoDim,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let single = |tok| Spanned {
            tok,
            line: l0,
            col: c0,
        };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' => out.push(single(Tok::LParen)),
            ')' => out.push(single(Tok::RParen)),
            ',' => out.push(single(Tok::Comma)),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(single(Tok::Ident(s)));
                continue;
            }
            c if c.is_ascii_digit() || matches!(c, '-' | '+' | '.') => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | '-' | '+'))
                {
                    // only allow a sign directly after an exponent marker
                    if matches!(chars[i], '-' | '+') && !matches!(chars[i - 1], 'e' | 'E') {
                        break;
                    }
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| ParseError::Syntax {
                    line: l0,
                    col: c0,
                    msg: format!("malformed number `{s}`"),
                })?;
                col += i - start;
                out.push(single(Tok::Num(v)));
                continue;
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    dim: Dim,
    end: (usize, usize),
}

impl Parser {
    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn numbers(&mut self, stop_at_expr: bool) -> Result<Vec<(f64, (usize, usize))>, ParseError> {
        let mut nums = Vec::new();
        loop {
            let at = self.here();
            match self.peek() {
                Some(Tok::Num(v)) => {
                    nums.push((*v, at));
                    self.pos += 1;
                }
                Some(Tok::Ident(_)) if stop_at_expr && !nums.is_empty() => return Ok(nums),
                _ => return self.err("expected a number"),
            }
            match self.peek() {
                Some(Tok::Comma) => self.pos += 1,
                Some(Tok::RParen) if !stop_at_expr => return Ok(nums),
                _ => return self.err("expected `,` or `)`"),
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        let name = match self.next() {
            Some(Tok::Ident(s)) => s,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected a command name");
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        let invalid = |source| ParseError::Invalid { line, col, source };
        if let Some(kind) = PrimitiveKind::from_name(&name) {
            let nums = self.numbers(false)?;
            self.expect(Tok::RParen, "`)`")?;
            if kind.dim() != self.dim {
                return Err(invalid(ExprError::WrongDim(kind.name(), self.dim)));
            }
            if nums.len() != self.dim.primitive_arity() {
                return Err(invalid(ExprError::Arity {
                    name: kind.name(),
                    expected: self.dim.primitive_arity(),
                    got: nums.len(),
                }));
            }
            for &(v, (l, c)) in &nums {
                if !(v > -1.0 && v < 1.0) {
                    return Err(ParseError::Invalid {
                        line: l,
                        col: c,
                        source: ExprError::OutOfRange {
                            name: kind.name(),
                            value: v,
                        },
                    });
                }
            }
            Ok(Expr::primitive(kind, nums.into_iter().map(|n| n.0).collect()))
        } else if let Some(op) = BoolOp::from_name(&name) {
            let left = self.expr()?;
            self.expect(Tok::Comma, "`,`")?;
            let right = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            Ok(Expr::boolean(op, left, right))
        } else if let Some(kind) = TransformKind::from_name(&name) {
            let nums = self.numbers(true)?;
            let child = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            let params: Vec<f64> = nums.into_iter().map(|n| n.0).collect();
            let node = Expr::transform(kind, params, child);
            // validate only this node's own shape; the child validated itself
            if let Expr::Transform { kind, params, .. } = &node {
                if *kind == TransformKind::Rotate2d && self.dim == Dim::Three {
                    return Err(invalid(ExprError::RotateIn3d));
                }
                if params.len() != kind.arity(self.dim) {
                    return Err(invalid(ExprError::Arity {
                        name: kind.name(),
                        expected: kind.arity(self.dim),
                        got: params.len(),
                    }));
                }
                if let Some(&v) = params
                    .iter()
                    .find(|v| !v.is_finite() || (*kind == TransformKind::Scale && **v <= 0.0))
                {
                    return Err(invalid(ExprError::BadTransform {
                        name: kind.name(),
                        value: v,
                    }));
                }
            }
            Ok(node)
        } else {
            Err(ParseError::Syntax {
                line,
                col,
                msg: format!("unknown command `{name}`"),
            })
        }
    }
}

/// Parses one program of the given dimension.
pub fn parse(text: &str, dim: Dim) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let end = toks.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1));
    let mut p = Parser {
        toks,
        pos: 0,
        dim,
        end,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return p.err("trailing input after program");
    }
    Ok(e)
}

/// Parses a program, taking its dimension from the first primitive name.
pub fn parse_any(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let dim = toks
        .iter()
        .find_map(|t| match &t.tok {
            Tok::Ident(s) => PrimitiveKind::from_name(s).map(|k| k.dim()),
            _ => None,
        })
        .ok_or(ParseError::NoDim)?;
    parse(text, dim)
}

/// Formats a parameter with six decimals, widening only when six decimals would
/// not read back to the identical value.
pub fn format_param(v: f64) -> String {
    for prec in 6..=17 {
        let s = format!("{v:.prec$}");
        if s.parse::<f64>() == Ok(v) {
            return s;
        }
    }
    format!("{v:?}")
}

fn join(params: &[f64]) -> String {
    params
        .iter()
        .map(|&v| format_param(v))
        .collect::<Vec<_>>()
        .join(",")
}

/// Prefix-form text; `parse(&print(e), dim) == e`.
pub fn print(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(e, &mut s);
    s
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Primitive { kind, params } => {
            out.push_str(kind.name());
            out.push('(');
            out.push_str(&join(params));
            out.push(')');
        }
        Expr::Boolean { op, left, right } => {
            out.push_str(op.name());
            out.push('(');
            write_expr(left, out);
            out.push_str(", ");
            write_expr(right, out);
            out.push(')');
        }
        Expr::Transform {
            kind,
            params,
            child,
        } => {
            out.push_str(kind.name());
            out.push('(');
            out.push_str(&join(params));
            out.push_str(", ");
            write_expr(child, out);
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_program, SamplerConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_single_primitive() {
        let e = parse("rectangle(0,0,0.5,0.5,0)", Dim::Two).unwrap();
        assert_eq!(
            e,
            Expr::primitive(PrimitiveKind::Rectangle, vec![0.0, 0.0, 0.5, 0.5, 0.0])
        );
    }

    #[test]
    fn parses_composition() {
        let e = parse(
            "union(rectangle(0,0,0.5,0.5,0), ellipse(0.3,0.3,0.2,0.2,0))",
            Dim::Two,
        )
        .unwrap();
        match e {
            Expr::Boolean { op, left, right } => {
                assert_eq!(op, BoolOp::Union);
                assert!(matches!(*left, Expr::Primitive { kind: PrimitiveKind::Rectangle, .. }));
                assert!(matches!(*right, Expr::Primitive { kind: PrimitiveKind::Ellipse, .. }));
            }
            _ => panic!("expected a boolean node"),
        }
    }

    #[test]
    fn rejects_out_of_range_literal() {
        let err = parse("cuboid(0,0,0,2,0,0)", Dim::Three).unwrap_err();
        match err {
            ParseError::Invalid { line, col, source } => {
                assert_eq!((line, col), (1, 14));
                assert!(matches!(source, ExprError::OutOfRange { value, .. } if value == 2.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_arity_and_dim() {
        assert!(matches!(
            parse("rectangle(0,0,0.5,0.5)", Dim::Two),
            Err(ParseError::Invalid {
                source: ExprError::Arity { .. },
                ..
            })
        ));
        assert!(matches!(
            parse("cuboid(0,0,0,0,0,0)", Dim::Two),
            Err(ParseError::Invalid {
                source: ExprError::WrongDim(..),
                ..
            })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("union(rectangle(0,0,0,0,0),\n  blob(1))", Dim::Two).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, col: 3, .. }), "{err:?}");
        assert!(parse("union(rectangle(0,0,0,0,0))", Dim::Two).is_err());
        assert!(parse("rectangle(0,0,0,0,0) extra", Dim::Two).is_err());
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "# a program\nsubtract( # outer\n  ellipse(0, 0, 0.5, 0.5, 0),\n  rectangle(0,0,0,0,0) )\n";
        let e = parse(text, Dim::Two).unwrap();
        assert_eq!(e.program_length(), 3);
    }

    #[test]
    fn prints_fixed_six_decimals() {
        let e = Expr::primitive(PrimitiveKind::Ellipse, vec![0.0, 0.0, 0.5, 0.5, 0.0]);
        assert_eq!(print(&e), "ellipse(0.000000,0.000000,0.500000,0.500000,0.000000)");
        let t = Expr::transform(TransformKind::Translate, vec![0.1, 0.2], e.clone());
        assert_eq!(
            print(&t),
            "translate(0.100000,0.200000, ellipse(0.000000,0.000000,0.500000,0.500000,0.000000))"
        );
        let u = Expr::union(e.clone(), e);
        assert!(print(&u).starts_with("union(ellipse("));
    }

    #[test]
    fn parse_any_infers_dim() {
        let e = parse_any("union(cuboid(0,0,0,0,0,0), ellipsoid(0,0,0,0,0,0))").unwrap();
        assert_eq!(e.dim(), Dim::Three);
        assert_eq!(parse_any("# nothing"), Err(ParseError::NoDim));
    }

    #[test]
    fn thousand_random_programs_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..1000 {
            let dim = if i % 2 == 0 { Dim::Two } else { Dim::Three };
            let cfg = SamplerConfig::new(dim, 3);
            let e = sample_program(&cfg, &mut rng);
            let text = print(&e);
            let back = parse(&text, dim).unwrap();
            assert_eq!(back, e);
            assert_eq!(back.program_length(), e.program_length());
        }
    }

    proptest! {
        #[test]
        fn arbitrary_params_round_trip(
            params in proptest::collection::vec(-0.999999f64..0.999999, 5),
            t in proptest::collection::vec(-3.0f64..3.0, 2),
            s in proptest::collection::vec(0.001f64..5.0, 2),
        ) {
            let p = Expr::primitive(PrimitiveKind::Rectangle, params);
            let e = Expr::transform(
                TransformKind::Translate,
                t,
                Expr::transform(TransformKind::Scale, s, Expr::subtract(p.clone(), p)),
            );
            prop_assert_eq!(parse(&print(&e), Dim::Two).unwrap(), e);
        }
    }
}
