//! Concrete syntax.
//!
//! ```text
//! or     := and ('|' and)*
//! and    := until ('&' until)*
//! until  := unary ('U' until)?          right associative
//! unary  := ('!' | 'X' | 'F' | 'G') unary | atom
//! atom   := 'true' | 'false' | 'p' digits | '(' or ')'
//! ```

use super::formula::{ApId, AtomicProposition, Expr, Formula};
use super::LtlError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    And,
    Or,
    Not,
    LParen,
    RParen,
    Next,
    Until,
    Eventually,
    Globally,
    True,
    False,
    Atom(ApId),
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, LtlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            b'&' => Tok::And,
            b'|' => Tok::Or,
            b'!' => Tok::Not,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "X" => Tok::Next,
                    "U" => Tok::Until,
                    "F" => Tok::Eventually,
                    "G" => Tok::Globally,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    w if w.len() > 1
                        && w.starts_with('p')
                        && w[1..].bytes().all(|b| b.is_ascii_digit()) =>
                    {
                        let id = w[1..].parse::<ApId>().map_err(|_| LtlError::Syntax {
                            offset: start,
                            message: format!("atom id out of range in `{w}`"),
                        })?;
                        Tok::Atom(id)
                    }
                    w => {
                        return Err(LtlError::Syntax {
                            offset: start,
                            message: format!("unexpected word `{w}`"),
                        })
                    }
                };
                out.push((tok, start));
                continue;
            }
            other => {
                return Err(LtlError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        out.push((tok, i));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

/// Parse tree before negation normalization. Every node keeps the byte
/// offset of its leading token for error reporting.
#[derive(Debug)]
enum Raw {
    True,
    False,
    Atom(ApId, usize),
    Not(Box<Raw>, usize),
    And(Box<Raw>, Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Next(Box<Raw>),
    Until(Box<Raw>, Box<Raw>),
    Eventually(Box<Raw>),
    Globally(usize),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if t.0 != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn or(&mut self) -> Result<Raw, LtlError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Raw::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Raw, LtlError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.until()?;
            lhs = Raw::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Raw, LtlError> {
        let lhs = self.unary()?;
        if *self.peek() == Tok::Until {
            self.bump();
            let rhs = self.until()?;
            return Ok(Raw::Until(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Raw, LtlError> {
        let offset = self.offset();
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Raw::Not(Box::new(self.unary()?), offset))
            }
            Tok::Next => {
                self.bump();
                Ok(Raw::Next(Box::new(self.unary()?)))
            }
            Tok::Eventually => {
                self.bump();
                Ok(Raw::Eventually(Box::new(self.unary()?)))
            }
            Tok::Globally => {
                self.bump();
                // Parse the operand so syntax errors still take priority.
                self.unary()?;
                Ok(Raw::Globally(offset))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Raw, LtlError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::True => Ok(Raw::True),
            Tok::False => Ok(Raw::False),
            Tok::Atom(id) => Ok(Raw::Atom(id, offset)),
            Tok::LParen => {
                let inner = self.or()?;
                let (close, at) = self.bump();
                if close != Tok::RParen {
                    return Err(LtlError::Syntax {
                        offset: at,
                        message: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            Tok::End => Err(LtlError::Syntax {
                offset,
                message: "unexpected end of formula".into(),
            }),
            other => Err(LtlError::Syntax {
                offset,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }
}

fn check_atoms(raw: &Raw, atoms: &[AtomicProposition]) -> Result<(), LtlError> {
    match raw {
        Raw::Atom(id, offset) => {
            if atoms.iter().any(|a| a.id == *id) {
                Ok(())
            } else {
                Err(LtlError::UnknownAtom {
                    id: *id,
                    offset: *offset,
                })
            }
        }
        Raw::Not(a, _) | Raw::Next(a) | Raw::Eventually(a) => check_atoms(a, atoms),
        Raw::And(a, b) | Raw::Or(a, b) | Raw::Until(a, b) => {
            check_atoms(a, atoms)?;
            check_atoms(b, atoms)
        }
        Raw::True | Raw::False | Raw::Globally(_) => Ok(()),
    }
}

fn nnf(raw: Raw, negated: Option<usize>) -> Result<Expr, LtlError> {
    let temporal_under_not = |offset: usize, op: &str| LtlError::NonCoSafe {
        offset,
        message: format!("negation of a temporal subformula (`{op}`)"),
    };
    Ok(match (raw, negated) {
        (Raw::Globally(offset), _) => {
            return Err(LtlError::NonCoSafe {
                offset,
                message: "the `G` (always) operator is not co-safe".into(),
            })
        }
        (Raw::True, None) | (Raw::False, Some(_)) => Expr::True,
        (Raw::False, None) | (Raw::True, Some(_)) => Expr::False,
        (Raw::Atom(id, _), None) => Expr::Atom(id),
        (Raw::Atom(id, _), Some(_)) => Expr::Not(id),
        (Raw::Not(inner, offset), None) => nnf(*inner, Some(offset))?,
        (Raw::Not(inner, _), Some(_)) => nnf(*inner, None)?,
        (Raw::And(a, b), None) => Expr::and(nnf(*a, None)?, nnf(*b, None)?),
        (Raw::And(a, b), n @ Some(_)) => Expr::or(nnf(*a, n)?, nnf(*b, n)?),
        (Raw::Or(a, b), None) => Expr::or(nnf(*a, None)?, nnf(*b, None)?),
        (Raw::Or(a, b), n @ Some(_)) => Expr::and(nnf(*a, n)?, nnf(*b, n)?),
        (Raw::Next(a), None) => Expr::next(nnf(*a, None)?),
        (Raw::Until(a, b), None) => Expr::until(nnf(*a, None)?, nnf(*b, None)?),
        (Raw::Eventually(a), None) => Expr::eventually(nnf(*a, None)?),
        (Raw::Next(_), Some(o)) => return Err(temporal_under_not(o, "X")),
        (Raw::Until(..), Some(o)) => return Err(temporal_under_not(o, "U")),
        (Raw::Eventually(_), Some(o)) => return Err(temporal_under_not(o, "F")),
    })
}

/// Parses `text` against the supplied atoms and returns the NNF formula.
pub fn parse_ltl(text: &str, atoms: &[AtomicProposition]) -> Result<Formula, LtlError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let raw = parser.or()?;
    if *parser.peek() != Tok::End {
        return Err(LtlError::Syntax {
            offset: parser.offset(),
            message: "trailing input".into(),
        });
    }
    check_atoms(&raw, atoms)?;
    let root = nnf(raw, None)?;
    Formula::new(root, atoms)
}
