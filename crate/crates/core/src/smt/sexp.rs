//! Minimal SMT-LIB2 s-expression reader.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            Sexp::Atom(_) => None,
        }
    }

    /// The head symbol of a list, if it has one.
    pub fn head(&self) -> Option<&str> {
        self.list()?.first()?.atom()
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Reader<'a> {
    text: &'a [u8],
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Reader<'a> {
    fn bump(&mut self) -> Option<u8> {
        let c = *self.text.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.column, message)
    }

    fn skip_blank(&mut self) {
        while let Some(c) = self.peek() {
            if c == b';' {
                while self.peek().is_some_and(|c| c != b'\n') {
                    self.bump();
                }
            } else if c.is_ascii_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Sexp> {
        self.skip_blank();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b')') => Err(self.error("unbalanced ')'")),
            Some(b'(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_blank();
                    match self.peek() {
                        None => return Err(self.error("unclosed '('")),
                        Some(b')') => {
                            self.bump();
                            return Ok(Sexp::List(items));
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
            }
            Some(b'"') => self.delimited(b'"'),
            Some(b'|') => self.delimited(b'|'),
            Some(_) => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| !c.is_ascii_whitespace() && !matches!(c, b'(' | b')' | b'"' | b'|' | b';'))
                {
                    self.bump();
                }
                Ok(Sexp::Atom(String::from_utf8_lossy(&self.text[start..self.pos]).into_owned()))
            }
        }
    }

    /// String literals (`""` escapes a quote) and quoted symbols. The
    /// delimiters are kept in the atom.
    fn delimited(&mut self, close: u8) -> Result<Sexp> {
        let start = self.pos;
        self.bump();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated literal")),
                Some(c) if c == close => {
                    if close == b'"' && self.peek() == Some(b'"') {
                        self.bump();
                        continue;
                    }
                    break;
                }
                Some(_) => {}
            }
        }
        Ok(Sexp::Atom(String::from_utf8_lossy(&self.text[start..self.pos]).into_owned()))
    }
}

/// Reads every top-level expression.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>> {
    let mut reader = Reader {
        text: text.as_bytes(),
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        reader.skip_blank();
        if reader.peek().is_none() {
            return Ok(out);
        }
        out.push(reader.read()?);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_lists_and_comments() {
        let v = parse_all("; c\n(a (b #x0f) \"s \"\"q\"\" ;\" |x y|)\nsat").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].head(), Some("a"));
        let items = v[0].list().unwrap();
        assert_eq!(items[1].to_string(), "(b #x0f)");
        assert_eq!(items[2].atom(), Some("\"s \"\"q\"\" ;\""));
        assert_eq!(items[3].atom(), Some("|x y|"));
        assert_eq!(v[1].atom(), Some("sat"));
    }

    #[test]
    fn errors_carry_positions() {
        match parse_all("(a\n (b)") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_all(")").is_err());
        assert!(parse_all("\"open").is_err());
    }

    #[test]
    fn display_round_trips() {
        let text = "(assert (and (bvsle px_0 #x00010000) (= ((_ extract 7 0) x) #b1)))";
        let v = parse_all(text).unwrap();
        assert_eq!(v[0].to_string(), text);
    }
}
