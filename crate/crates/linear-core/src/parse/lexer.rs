use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u32),
    Sym(&'static str),
    Kw(&'static str),
    Delta,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(s) | Tok::Kw(s) => format!("`{s}`"),
            Tok::Delta => "`Δ`".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

pub const KEYWORDS: &[&str] = &["data", "assume", "let", "letrec", "in", "case", "of", "forall"];

const SYMBOLS: &[&str] = &[
    "/\\", "=>", "->", "\\", "(", ")", "{", "}", "[", "]", ":", ";", ".", ",", "=", "@", "#", "|",
];

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = (line, col);
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_' || chars[j] == '\'') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            col += (j - i) as u32;
            i = j;
            if word == "_" {
                Tok::Sym("_")
            } else if let Some(kw) = KEYWORDS.iter().find(|k| **k == word) {
                Tok::Kw(kw)
            } else {
                Tok::Ident(word)
            }
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let digits: String = chars[i..j].iter().collect();
            let n = digits.parse::<u32>().map_err(|_| ParseError::at(line, col, "integer literal out of range"))?;
            col += (j - i) as u32;
            i = j;
            Tok::Int(n)
        } else if c == 'Δ' {
            i += 1;
            col += 1;
            Tok::Delta
        } else if let Some(sym) = SYMBOLS.iter().find(|s| s.chars().enumerate().all(|(k, sc)| chars.get(i + k) == Some(&sc))) {
            let n = sym.chars().count();
            i += n;
            col += n as u32;
            Tok::Sym(sym)
        } else {
            return Err(ParseError::at(line, col, format!("unexpected character `{c}`")));
        };
        out.push(Token { tok, line: start.0, col: start.1, end_line: line, end_col: col });
    }
    out.push(Token { tok: Tok::Eof, line, col, end_line: line, end_col: col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_binders_and_arrows() {
        assert_eq!(
            toks(r"\(x :1 a). /\p. a ->@w b"),
            vec![
                Tok::Sym("\\"),
                Tok::Sym("("),
                Tok::Ident("x".into()),
                Tok::Sym(":"),
                Tok::Int(1),
                Tok::Ident("a".into()),
                Tok::Sym(")"),
                Tok::Sym("."),
                Tok::Sym("/\\"),
                Tok::Ident("p".into()),
                Tok::Sym("."),
                Tok::Ident("a".into()),
                Tok::Sym("->"),
                Tok::Sym("@"),
                Tok::Ident("w".into()),
                Tok::Ident("b".into()),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn comments_and_delta() {
        assert_eq!(
            toks("-- EXPECT: accept\nlet y :Δ{x:1}"),
            vec![
                Tok::Kw("let"),
                Tok::Ident("y".into()),
                Tok::Sym(":"),
                Tok::Delta,
                Tok::Sym("{"),
                Tok::Ident("x".into()),
                Tok::Sym(":"),
                Tok::Int(1),
                Tok::Sym("}"),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let t = lex("\n  foo").unwrap();
        assert_eq!((t[0].line, t[0].col, t[0].end_col), (2, 3, 6));
    }

    #[test]
    fn rejects_stray_characters() {
        let e = lex("x $ y").unwrap_err();
        assert_eq!((e.line, e.col), (1, 3));
    }
}
