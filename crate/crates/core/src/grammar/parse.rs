use super::{Grammar, GrammarBuilder, SymbolName, DEFAULT_START};
use crate::error::{Error, Result};

/// Parses the line-oriented grammar format.
///
/// ```text
/// start: S            # optional, must be the first directive; default ROOT
/// S -> A B 1.0
/// A -> 'a' 0.7        # terminals are single-quoted, \' escapes a quote
/// ```
pub fn parse_grammar(text: &str) -> Result<Grammar> {
    let mut start: Option<String> = None;
    let mut pending: Vec<(usize, String, Vec<SymbolName>, f64)> = Vec::new();
    let mut seen_content = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw, line)?;
        if tokens.is_empty() {
            continue;
        }
        if let Token::Bare(first) = &tokens[0] {
            if first == "start:" || first.starts_with("start:") {
                if seen_content {
                    return Err(Error::Syntax {
                        line,
                        msg: "`start:` directive must precede all rules".into(),
                    });
                }
                let rest: Vec<&Token> = if first == "start:" {
                    tokens[1..].iter().collect()
                } else {
                    Vec::new()
                };
                let name = if first == "start:" {
                    match rest.as_slice() {
                        [Token::Bare(name)] => name.clone(),
                        _ => {
                            return Err(Error::Syntax {
                                line,
                                msg: "expected `start: <NONTERMINAL>`".into(),
                            })
                        }
                    }
                } else if tokens.len() == 1 {
                    first["start:".len()..].to_string()
                } else {
                    return Err(Error::Syntax {
                        line,
                        msg: "expected `start: <NONTERMINAL>`".into(),
                    });
                };
                check_nonterminal(&name, line)?;
                start = Some(name);
                seen_content = true;
                continue;
            }
        }
        seen_content = true;
        let (lhs, rhs, prob) = parse_rule(&tokens, line)?;
        pending.push((line, lhs, rhs, prob));
    }

    let start = start.unwrap_or_else(|| DEFAULT_START.to_string());
    let mut builder = GrammarBuilder::new(start);
    for (line, lhs, rhs, prob) in pending {
        builder.add_rule(&lhs, rhs, prob, line)?;
    }
    builder.build()
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Bare(String),
    Quoted(String),
}

fn tokenize(raw: &str, line: usize) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = raw.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '\'' {
            chars.next();
            let mut value = String::new();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some(e @ ('\'' | '\\')) => value.push(e),
                        _ => {
                            return Err(Error::Syntax {
                                line,
                                msg: "invalid escape in terminal".into(),
                            })
                        }
                    },
                    '\'' => {
                        closed = true;
                        break;
                    }
                    c if c.is_whitespace() => {
                        return Err(Error::Syntax {
                            line,
                            msg: "terminals may not contain whitespace".into(),
                        })
                    }
                    c => value.push(c),
                }
            }
            if !closed {
                return Err(Error::Syntax {
                    line,
                    msg: "unterminated terminal quote".into(),
                });
            }
            if value.is_empty() {
                return Err(Error::Syntax {
                    line,
                    msg: "empty terminal".into(),
                });
            }
            if chars.peek().is_some_and(|c| !c.is_whitespace() && *c != '#') {
                return Err(Error::Syntax {
                    line,
                    msg: "expected whitespace after terminal".into(),
                });
            }
            tokens.push(Token::Quoted(value));
        } else {
            let mut value = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || c == '#' {
                    break;
                }
                value.push(c);
                chars.next();
            }
            tokens.push(Token::Bare(value));
        }
    }
    Ok(tokens)
}

fn parse_rule(tokens: &[Token], line: usize) -> Result<(String, Vec<SymbolName>, f64)> {
    let syntax = |msg: &str| Error::Syntax {
        line,
        msg: msg.to_string(),
    };
    let lhs = match tokens.first() {
        Some(Token::Bare(name)) => name.clone(),
        _ => return Err(syntax("expected a nonterminal on the left-hand side")),
    };
    check_nonterminal(&lhs, line)?;
    if tokens.get(1) != Some(&Token::Bare("->".into())) {
        return Err(syntax("expected `->` after the left-hand side"));
    }
    let prob = match tokens.last() {
        Some(Token::Bare(p)) if tokens.len() > 2 => parse_prob(p).ok_or_else(|| {
            syntax(&format!("`{p}` is not a probability in (0, 1]"))
        })?,
        _ => return Err(syntax("missing rule probability")),
    };
    let body = &tokens[2..tokens.len() - 1];
    if body.is_empty() {
        return Err(syntax("empty right-hand side (epsilon rules are not supported)"));
    }
    let mut rhs = Vec::with_capacity(body.len());
    for tok in body {
        match tok {
            Token::Quoted(t) => rhs.push(SymbolName::Terminal(t.clone())),
            Token::Bare(n) => {
                check_nonterminal(n, line)?;
                rhs.push(SymbolName::Nonterminal(n.clone()));
            }
        }
    }
    Ok((lhs, rhs, prob))
}

fn parse_prob(text: &str) -> Option<f64> {
    let p: f64 = text.parse().ok()?;
    (p.is_finite() && p > 0.0 && p <= 1.0).then_some(p)
}

/// Nonterminal labels: any run of non-whitespace characters other than
/// quotes, parentheses and `#`, and not the arrow itself.
pub(crate) fn is_valid_nonterminal(name: &str) -> bool {
    !name.is_empty()
        && name != "->"
        && !name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '\'' | '(' | ')' | '#'))
}

fn check_nonterminal(name: &str, line: usize) -> Result<()> {
    if is_valid_nonterminal(name) {
        Ok(())
    } else {
        Err(Error::Syntax {
            line,
            msg: format!("invalid nonterminal `{name}`"),
        })
    }
}
