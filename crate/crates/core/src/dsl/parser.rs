use super::lexer::{tokenize, Tok, Token};
use super::{BinOp, DslError, Expr};

/// Recursive-descent parser. Precedence, loosest first:
/// `or`, `and`, `not`, `+ -`, `*`, unary `-`.
pub(crate) fn parse_expr(src: &str, n_features: usize) -> Result<Expr, DslError> {
    if src.trim().is_empty() {
        return Err(DslError::syntax(0, "empty expression"));
    }
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, at: 0, n_features, end: src.len() };
    let expr = p.or_expr()?;
    if let Some(t) = p.peek() {
        return Err(DslError::syntax(t.pos, format!("unexpected trailing {}", describe(&t.tok))));
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    n_features: usize,
    end: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(_, text) => format!("number '{text}'"),
        Tok::Ident(w) => format!("'{w}'"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::LBracket => "'['".into(),
        Tok::RBracket => "']'".into(),
    }
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn pos(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(w), .. }) if w == word)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DslError> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(DslError::syntax(t.pos, format!("expected {what}, found {}", describe(&t.tok)))),
            None => Err(DslError::syntax(pos, format!("expected {what}, found end of input"))),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.and_expr()?;
        while self.is_word("or") {
            self.at += 1;
            let rhs = self.and_expr()?;
            lhs = Expr::bin(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.not_expr()?;
        while self.is_word("and") {
            self.at += 1;
            let rhs = self.not_expr()?;
            lhs = Expr::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, DslError> {
        if self.is_word("not") {
            self.at += 1;
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.additive()
    }

    fn additive(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Star)) {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Minus)) {
            self.at += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        let pos = self.pos();
        let Some(tok) = self.next() else {
            return Err(DslError::syntax(pos, "unexpected end of input"));
        };
        match tok.tok {
            Tok::Num(v, _) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.or_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(word) => match word.as_str() {
                "state" => Ok(Expr::State),
                "agent_feats" => self.feature_index(),
                "and" | "or" | "not" => Err(DslError::syntax(tok.pos, format!("'{word}' is missing an operand"))),
                _ => Err(DslError::Disallowed { pos: tok.pos, what: format!("identifier '{word}'") }),
            },
            other => Err(DslError::syntax(tok.pos, format!("unexpected {}", describe(&other)))),
        }
    }

    fn feature_index(&mut self) -> Result<Expr, DslError> {
        self.expect(Tok::LBracket, "'[' after agent_feats")?;
        let pos = self.pos();
        let index = match self.next() {
            Some(Token { tok: Tok::Num(_, text), .. }) if text.bytes().all(|b| b.is_ascii_digit()) => text
                .parse::<usize>()
                .map_err(|_| DslError::syntax(pos, format!("feature index '{text}' is too large")))?,
            Some(t) => {
                return Err(DslError::syntax(t.pos, format!("feature index must be a non-negative integer, found {}", describe(&t.tok))))
            }
            None => return Err(DslError::syntax(pos, "unexpected end of input in feature index")),
        };
        self.expect(Tok::RBracket, "']'")?;
        if index >= self.n_features {
            return Err(DslError::IndexOutOfRange { index, n_features: self.n_features });
        }
        Ok(Expr::Feat(index))
    }
}
