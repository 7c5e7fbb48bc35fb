use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Num(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    LBracket,
    RBracket,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => out.push(Token { tok: Tok::Plus, pos: start }),
            b'-' => out.push(Token { tok: Tok::Minus, pos: start }),
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    return Err(DslError::syntax(start, "exponentiation is not supported"));
                }
                out.push(Token { tok: Tok::Star, pos: start })
            }
            b'(' => out.push(Token { tok: Tok::LParen, pos: start }),
            b')' => out.push(Token { tok: Tok::RParen, pos: start }),
            b'[' => out.push(Token { tok: Tok::LBracket, pos: start }),
            b']' => out.push(Token { tok: Tok::RBracket, pos: start }),
            b'/' | b'%' => {
                return Err(DslError::Disallowed { pos: start, what: format!("operator '{}'", c as char) });
            }
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i);
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| DslError::syntax(start, format!("malformed number '{text}'")))?;
                out.push(Token { tok: Tok::Num(value, text.to_string()), pos: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &src[start..i];
                if !matches!(word, "state" | "agent_feats" | "and" | "or" | "not") {
                    let rest = src[i..].trim_start();
                    let what = if word == "return" {
                        "keyword 'return'".to_string()
                    } else if rest.starts_with('(') {
                        format!("function call '{word}(...)'")
                    } else {
                        format!("identifier '{word}'")
                    };
                    return Err(DslError::Disallowed { pos: start, what });
                }
                out.push(Token { tok: Tok::Ident(word.to_string()), pos: start });
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(DslError::syntax(start, format!("unexpected character '{ch}'")));
            }
        }
        i += 1;
    }
    Ok(out)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_words() {
        let toks = tokenize("2.5*state + .5e1").unwrap();
        assert_eq!(toks.len(), 5);
        assert_eq!(toks[0].tok, Tok::Num(2.5, "2.5".into()));
        assert_eq!(toks[2].tok, Tok::Ident("state".into()));
        assert_eq!(toks[4].tok, Tok::Num(5.0, ".5e1".into()));
        assert_eq!(toks[4].pos, 12);
    }

    #[test]
    fn rejects_division() {
        assert!(matches!(tokenize("state / 2"), Err(DslError::Disallowed { pos: 6, .. })));
    }
}
