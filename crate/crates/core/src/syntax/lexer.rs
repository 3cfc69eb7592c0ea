use crate::error::{Error, Result, Span};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    Comma,
    Dot,
    Colon,
    Eq,
    Plus,
    Star,
    Cup,
    OPlus,
    MapsTo,
    FatArrow,
    At,
    Caret,
    Prime,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrack => "[",
            Tok::RBrack => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Colon => ":",
            Tok::Eq => "=",
            Tok::Plus => "+",
            Tok::Star => "*",
            Tok::Cup => "\\/",
            Tok::OPlus => "(+)",
            Tok::MapsTo => "|->",
            Tok::FatArrow => "=>",
            Tok::At => "@",
            Tok::Caret => "^",
            Tok::Prime => "'",
            _ => "?",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |s: usize, e: usize, m: String| Error::Parse { span: Span::new(s, e), message: m };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let rest = &src[i..];
        let sym = |s: &str| rest.starts_with(s);
        let (tok, len) = if sym("(+)") {
            (Tok::OPlus, 3)
        } else if sym("|->") {
            (Tok::MapsTo, 3)
        } else if sym("=>") {
            (Tok::FatArrow, 2)
        } else if sym("==") {
            (Tok::EqEq, 2)
        } else if sym("!=") {
            (Tok::Ne, 2)
        } else if sym("<=") {
            (Tok::Le, 2)
        } else if sym(">=") {
            (Tok::Ge, 2)
        } else if sym("&&") {
            (Tok::AndAnd, 2)
        } else if sym("||") {
            (Tok::OrOr, 2)
        } else if sym("\\/") {
            (Tok::Cup, 2)
        } else if c == b'"' {
            let mut s = String::new();
            let mut j = i + 1;
            let mut chars = src[j..].char_indices();
            loop {
                match chars.next() {
                    None => return Err(err(start, src.len(), "unterminated string".into())),
                    Some((k, '"')) => {
                        j += k + 1;
                        break;
                    }
                    Some((_, '\\')) => match chars.next() {
                        Some((_, 'n')) => s.push('\n'),
                        Some((_, ch)) => s.push(ch),
                        None => return Err(err(start, src.len(), "unterminated string".into())),
                    },
                    Some((_, ch)) => s.push(ch),
                }
            }
            out.push(Token { tok: Tok::Str(s), span: Span::new(start, j) });
            i = j;
            continue;
        } else if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let n: i64 = src[i..j].parse().map_err(|_| err(i, j, "integer literal out of range".into()))?;
            (Tok::Int(n), j - i)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            (Tok::Ident(src[i..j].to_string()), j - i)
        } else {
            let t = match c {
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b'[' => Tok::LBrack,
                b']' => Tok::RBrack,
                b'{' => Tok::LBrace,
                b'}' => Tok::RBrace,
                b'<' => Tok::Lt,
                b'>' => Tok::Gt,
                b',' => Tok::Comma,
                b'.' => Tok::Dot,
                b':' => Tok::Colon,
                b'=' => Tok::Eq,
                b'+' => Tok::Plus,
                b'*' => Tok::Star,
                b'@' => Tok::At,
                b'^' => Tok::Caret,
                b'\'' => Tok::Prime,
                _ => {
                    let ch = rest.chars().next().unwrap();
                    return Err(err(i, i + ch.len_utf8(), format!("unexpected character {ch:?}")));
                }
            };
            (t, 1)
        };
        out.push(Token { tok, span: Span::new(start, start + len) });
        i += len;
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(src.len(), src.len()) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_literals() {
        let toks: Vec<Tok> = lex("x.1 (+) \"a\\\"b\" -3 |-> <= \\/").unwrap().into_iter().map(|t| t.tok).collect();
        assert_eq!(
            toks,
            vec![
                Tok::Ident("x".into()),
                Tok::Dot,
                Tok::Int(1),
                Tok::OPlus,
                Tok::Str("a\"b".into()),
                Tok::Int(-3),
                Tok::MapsTo,
                Tok::Le,
                Tok::Cup,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn reports_span_of_bad_character() {
        let e = lex("for x ? y").unwrap_err();
        assert_eq!(e.span(), Some(Span::new(6, 7)));
    }
}
