use super::SqlError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Number(i64),
    Str(String),
    /// Bare `?`, bound to the next positional parameter.
    Positional,
    /// `?Name`, a context parameter.
    Named(String),
    /// `?3`, a template variable.
    Var(u32),
    Star,
    Comma,
    Dot,
    LParen,
    RParen,
    Semicolon,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Token::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

pub fn tokenize(sql: &str) -> Result<Vec<Token>, SqlError> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '*' => Some(Token::Star),
            ',' => Some(Token::Comma),
            '.' => Some(Token::Dot),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            ';' => Some(Token::Semicolon),
            '=' => Some(Token::Eq),
            _ => None,
        };
        if let Some(t) = single {
            out.push(t);
            i += 1;
            continue;
        }
        match c {
            '<' => {
                match chars.get(i + 1) {
                    Some('=') => {
                        out.push(Token::Le);
                        i += 2;
                    }
                    Some('>') => {
                        out.push(Token::Ne);
                        i += 2;
                    }
                    _ => {
                        out.push(Token::Lt);
                        i += 1;
                    }
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token::Ge);
                    i += 2;
                } else {
                    out.push(Token::Gt);
                    i += 1;
                }
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                out.push(Token::Ne);
                i += 2;
            }
            '?' => {
                i += 1;
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if word.is_empty() {
                    out.push(Token::Positional);
                } else if word.chars().all(|c| c.is_ascii_digit()) {
                    let n = word
                        .parse()
                        .map_err(|_| SqlError::Syntax(format!("bad variable ?{word}")))?;
                    out.push(Token::Var(n));
                } else if word.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                    return Err(SqlError::Syntax(format!("bad placeholder ?{word}")));
                } else {
                    out.push(Token::Named(word));
                }
            }
            '\'' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(SqlError::Syntax("unterminated string literal".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Token::Str(s));
            }
            '"' | '`' => {
                let close = c;
                i += 1;
                let start = i;
                while i < chars.len() && chars[i] != close {
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(SqlError::Syntax("unterminated quoted identifier".into()));
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
                i += 1;
            }
            _ if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n = text
                    .parse()
                    .map_err(|_| SqlError::Syntax(format!("integer literal out of range: {text}")))?;
                out.push(Token::Number(n));
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(SqlError::Syntax(format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders() {
        let toks = tokenize("a = ? AND b = ?MyUId AND c = ?0").unwrap();
        assert!(toks.contains(&Token::Positional));
        assert!(toks.contains(&Token::Named("MyUId".into())));
        assert!(toks.contains(&Token::Var(0)));
    }

    #[test]
    fn literals_and_operators() {
        let toks = tokenize("x <> 'it''s' AND y <= -3").unwrap();
        assert_eq!(
            toks,
            vec![
                Token::Ident("x".into()),
                Token::Ne,
                Token::Str("it's".into()),
                Token::Ident("AND".into()),
                Token::Ident("y".into()),
                Token::Le,
                Token::Number(-3),
            ]
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(tokenize("a # b").is_err());
        assert!(tokenize("'open").is_err());
    }
}
