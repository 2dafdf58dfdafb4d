//! Lexer and recursive-descent parser for the model language.
//!
//! A model file is a sequence of sections: `[states]`, `[inputs]`,
//! `[params]`, `[delays]`, `[equations]`, `[output]`. Equations are written
//! one per line as `dx = <expr>` where `x` is a declared state name. The
//! complete grammar is documented in `docs/model-format.md`.

use std::collections::HashMap;

use serde::Serialize;

use crate::expr::{BinOp, Expr, SourceSpan, UnOp};
use crate::model::{ModelSpec, OutputMap};

/// A parse-time finding with its source location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub span: SourceSpan,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bytes {}..{}: {}", self.span.begin, self.span.end, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex(src: &str, base: usize) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' => {
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                let tok = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => Tok::Comma,
                };
                i += 1;
                toks.push(Token {
                    tok,
                    span: SourceSpan::new(base + start, base + i),
                });
            }
            '0'..='9' | '.' => {
                while i < bytes.len()
                    && matches!(bytes[i] as char, '0'..='9' | '.' | 'e' | 'E')
                {
                    // allow exponent sign
                    if matches!(bytes[i] as char, 'e' | 'E')
                        && i + 1 < bytes.len()
                        && matches!(bytes[i + 1] as char, '+' | '-')
                    {
                        i += 1;
                    }
                    i += 1;
                }
                let text = &src[start..i];
                let span = SourceSpan::new(base + start, base + i);
                match text.parse::<f64>() {
                    Ok(v) => toks.push(Token { tok: Tok::Num(v), span }),
                    Err(_) => {
                        return Err(Diagnostic {
                            span,
                            message: format!("malformed number literal `{text}`"),
                        })
                    }
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    span: SourceSpan::new(base + start, base + i),
                });
            }
            _ => {
                return Err(Diagnostic {
                    span: SourceSpan::new(base + start, base + start + 1),
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(toks)
}

/// Name resolution context built from the model header sections.
pub struct SymbolTable {
    pub states: HashMap<String, usize>,
    pub inputs: HashMap<String, usize>,
    pub params: HashMap<String, usize>,
    /// Delay label -> 1-based slot index.
    pub taus: HashMap<String, usize>,
    pub nus: HashMap<String, usize>,
}

struct ExprParser<'a> {
    toks: &'a [Token],
    pos: usize,
    syms: &'a SymbolTable,
    end_span: SourceSpan,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, span: SourceSpan, message: String) -> Diagnostic {
        Diagnostic { span, message }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<SourceSpan, Diagnostic> {
        match self.next() {
            Some(t) if t.tok == want => Ok(t.span),
            Some(t) => Err(self.err(t.span, format!("expected {what}"))),
            None => Err(self.err(self.end_span, format!("expected {what}, found end of line"))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let opspan = t.span;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span: opspan,
            };
        }
        Ok(lhs)
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let opspan = t.span;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span: opspan,
            };
        }
        Ok(lhs)
    }

    // unary := '-' unary | power   (pow binds tighter than unary minus)
    fn unary(&mut self) -> Result<Expr, Diagnostic> {
        if let Some(t) = self.peek() {
            if t.tok == Tok::Minus {
                let span = t.span;
                self.pos += 1;
                let arg = self.unary()?;
                return Ok(Expr::Unary {
                    op: UnOp::Neg,
                    arg: Box::new(arg),
                    span,
                });
            }
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right-associative)
    fn power(&mut self) -> Result<Expr, Diagnostic> {
        let base = self.atom()?;
        if let Some(t) = self.peek() {
            if t.tok == Tok::Caret {
                let span = t.span;
                self.pos += 1;
                let exp = self.unary()?;
                return Ok(Expr::Binary {
                    op: BinOp::Pow,
                    lhs: Box::new(base),
                    rhs: Box::new(exp),
                    span,
                });
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, Diagnostic> {
        let t = match self.next() {
            Some(t) => t,
            None => {
                return Err(self.err(self.end_span, "expected expression, found end of line".into()))
            }
        };
        match t.tok {
            Tok::Num(v) => Ok(Expr::Const(v, t.span)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let is_call = matches!(self.peek().map(|t| &t.tok), Some(Tok::LParen));
                if is_call {
                    self.call(&name, t.span)
                } else {
                    self.reference(&name, 0, t.span)
                }
            }
            _ => Err(self.err(t.span, "expected a number, name, or `(`".into())),
        }
    }

    fn call(&mut self, name: &str, span: SourceSpan) -> Result<Expr, Diagnostic> {
        self.expect(Tok::LParen, "`(`")?;
        if name == "delay" {
            let (target, tspan) = self.ident("delayed state or input name")?;
            self.expect(Tok::Comma, "`,` between delay target and delay label")?;
            let (label, lspan) = self.ident("delay label")?;
            let close = self.expect(Tok::RParen, "`)`")?;
            let full = SourceSpan::new(span.begin, close.end);
            if let Some(&s) = self.syms.states.get(&target) {
                match self.syms.taus.get(&label) {
                    Some(&d) => Ok(Expr::State {
                        state: s,
                        delay: d,
                        span: full,
                    }),
                    None => Err(self.err(lspan, format!("unknown state-delay label `{label}`"))),
                }
            } else if let Some(&u) = self.syms.inputs.get(&target) {
                match self.syms.nus.get(&label) {
                    Some(&d) => Ok(Expr::Input {
                        input: u,
                        delay: d,
                        span: full,
                    }),
                    None => Err(self.err(lspan, format!("unknown input-delay label `{label}`"))),
                }
            } else {
                Err(self.err(tspan, format!("unknown state or input `{target}`")))
            }
        } else {
            let op = match name {
                "sin" => UnOp::Sin,
                "cos" => UnOp::Cos,
                "exp" => UnOp::Exp,
                "log" => UnOp::Log,
                "sqrt" => UnOp::Sqrt,
                "abs" => UnOp::Abs,
                _ => return Err(self.err(span, format!("unknown function `{name}`"))),
            };
            let arg = self.expr()?;
            let close = self.expect(Tok::RParen, "`)`")?;
            Ok(Expr::Unary {
                op,
                arg: Box::new(arg),
                span: SourceSpan::new(span.begin, close.end),
            })
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan), Diagnostic> {
        match self.next() {
            Some(Token {
                tok: Tok::Ident(s),
                span,
            }) => Ok((s, span)),
            Some(t) => Err(self.err(t.span, format!("expected {what}"))),
            None => Err(self.err(self.end_span, format!("expected {what}, found end of line"))),
        }
    }

    fn reference(&mut self, name: &str, delay: usize, span: SourceSpan) -> Result<Expr, Diagnostic> {
        if let Some(&s) = self.syms.states.get(name) {
            Ok(Expr::State {
                state: s,
                delay,
                span,
            })
        } else if let Some(&u) = self.syms.inputs.get(name) {
            Ok(Expr::Input {
                input: u,
                delay,
                span,
            })
        } else if let Some(&p) = self.syms.params.get(name) {
            Ok(Expr::Param { idx: p, span })
        } else {
            Err(self.err(span, format!("unknown identifier `{name}`")))
        }
    }
}

/// Parse a single expression against a symbol table. `base` is the byte
/// offset of `src` within the enclosing document.
pub fn parse_expr(src: &str, base: usize, syms: &SymbolTable) -> Result<Expr, Diagnostic> {
    let toks = lex(src, base)?;
    let end_span = SourceSpan::new(base + src.len(), base + src.len());
    let mut p = ExprParser {
        toks: &toks,
        pos: 0,
        syms,
        end_span,
    };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(Diagnostic {
            span: t.span,
            message: "unexpected trailing tokens".to_string(),
        });
    }
    Ok(e)
}

fn dup_check(names: &[String], span: SourceSpan, diags: &mut Vec<Diagnostic>) {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.clone()) {
            diags.push(Diagnostic {
                span,
                message: format!("duplicate name `{n}`"),
            });
        }
    }
}

/// Parse a full model document into a [`ModelSpec`].
pub fn parse_model(source: &str) -> Result<ModelSpec, Vec<Diagnostic>> {
    let mut diags = Vec::new();

    let mut states: Vec<String> = Vec::new();
    let mut inputs: Vec<String> = Vec::new();
    let mut params: Vec<String> = Vec::new();
    let mut taus: Vec<String> = Vec::new();
    let mut nus: Vec<String> = Vec::new();
    let mut output_rows: Vec<Vec<f64>> = Vec::new();
    let mut output_identity = true;
    // (state name, rhs text, rhs byte offset, line span)
    let mut raw_equations: Vec<(String, String, usize, SourceSpan)> = Vec::new();

    let mut section: Option<String> = None;
    let mut offset = 0usize;
    for line in source.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let mut text = line.trim_end_matches(['\n', '\r']);
        if let Some(hash) = text.find('#') {
            text = &text[..hash];
        }
        let trimmed = text.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = text.len() - text.trim_start().len();
        let span = SourceSpan::new(line_start + indent, line_start + indent + trimmed.len());

        if trimmed.starts_with('[') {
            if trimmed.ends_with(']') {
                section = Some(trimmed[1..trimmed.len() - 1].to_string());
                match section.as_deref() {
                    Some("states" | "inputs" | "params" | "delays" | "equations" | "output") => {}
                    Some(other) => diags.push(Diagnostic {
                        span,
                        message: format!("unknown section `[{other}]`"),
                    }),
                    None => unreachable!(),
                }
            } else {
                diags.push(Diagnostic {
                    span,
                    message: "unterminated section header".to_string(),
                });
            }
            continue;
        }

        match section.as_deref() {
            Some("states") => states.extend(trimmed.split_whitespace().map(String::from)),
            Some("inputs") => inputs.extend(trimmed.split_whitespace().map(String::from)),
            Some("params") => params.extend(trimmed.split_whitespace().map(String::from)),
            Some("delays") => {
                if let Some(rest) = trimmed.strip_prefix("state:") {
                    taus.extend(rest.split_whitespace().map(String::from));
                } else if let Some(rest) = trimmed.strip_prefix("input:") {
                    nus.extend(rest.split_whitespace().map(String::from));
                } else {
                    diags.push(Diagnostic {
                        span,
                        message: "delay lines must start with `state:` or `input:`".to_string(),
                    });
                }
            }
            Some("output") => {
                if trimmed == "identity" {
                    output_identity = true;
                } else {
                    output_identity = false;
                    let row: Result<Vec<f64>, _> =
                        trimmed.split_whitespace().map(str::parse::<f64>).collect();
                    match row {
                        Ok(r) => output_rows.push(r),
                        Err(_) => diags.push(Diagnostic {
                            span,
                            message: "output rows must be whitespace-separated numbers or `identity`"
                                .to_string(),
                        }),
                    }
                }
            }
            Some("equations") => {
                let eq_pos = match text.find('=') {
                    Some(p) => p,
                    None => {
                        diags.push(Diagnostic {
                            span,
                            message: "equation lines must have the form `dxi = <expr>`".to_string(),
                        });
                        continue;
                    }
                };
                let lhs = text[..eq_pos].trim();
                let rhs_off = line_start + eq_pos + 1;
                let rhs = &text[eq_pos + 1..];
                match lhs.strip_prefix('d') {
                    Some(name) if !name.is_empty() => {
                        raw_equations.push((name.to_string(), rhs.to_string(), rhs_off, span));
                    }
                    _ => diags.push(Diagnostic {
                        span,
                        message: format!("left-hand side `{lhs}` must be `d<state>`"),
                    }),
                }
            }
            Some(_) => {}
            None => diags.push(Diagnostic {
                span,
                message: "content before the first section header".to_string(),
            }),
        }
    }

    let whole = SourceSpan::new(0, source.len());
    if states.is_empty() {
        diags.push(Diagnostic {
            span: whole,
            message: "model declares no states".to_string(),
        });
    }
    dup_check(&states, whole, &mut diags);
    dup_check(&inputs, whole, &mut diags);
    dup_check(&params, whole, &mut diags);
    dup_check(&taus, whole, &mut diags);
    dup_check(&nus, whole, &mut diags);

    let syms = SymbolTable {
        states: states.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect(),
        inputs: inputs.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect(),
        params: params.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect(),
        taus: taus.iter().cloned().enumerate().map(|(i, n)| (n, i + 1)).collect(),
        nus: nus.iter().cloned().enumerate().map(|(i, n)| (n, i + 1)).collect(),
    };

    let mut equations: Vec<Option<Expr>> = vec![None; states.len()];
    for (name, rhs, rhs_off, span) in &raw_equations {
        let idx = match syms.states.get(name) {
            Some(&i) => i,
            None => {
                diags.push(Diagnostic {
                    span: *span,
                    message: format!("equation for unknown state `{name}`"),
                });
                continue;
            }
        };
        if equations[idx].is_some() {
            diags.push(Diagnostic {
                span: *span,
                message: format!("duplicate equation for state `{name}`"),
            });
            continue;
        }
        match parse_expr(rhs, *rhs_off, &syms) {
            Ok(e) => equations[idx] = Some(e),
            Err(d) => diags.push(d),
        }
    }
    for (i, eq) in equations.iter().enumerate() {
        if eq.is_none() {
            diags.push(Diagnostic {
                span: whole,
                message: format!("missing equation for state `{}`", states[i]),
            });
        }
    }

    if !diags.is_empty() {
        return Err(diags);
    }

    Ok(ModelSpec {
        state_names: states,
        input_names: inputs,
        param_names: params,
        tau_names: taus,
        nu_names: nus,
        equations: equations.into_iter().map(Option::unwrap).collect(),
        output_map: if output_identity {
            OutputMap::Identity
        } else {
            OutputMap::Matrix(output_rows)
        },
    })
}
