//! Recursive-descent parser producing a concrete syntax tree.
//!
//! Node kinds follow the tree-sitter Python grammar names so that subtree
//! shapes are comparable with the usual syntax-match metric. Operator and
//! punctuation tokens are not nodes.

use thiserror::Error;

use super::lexer::{tokenize, LexError, TokKind, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: &'static str,
    /// Source text for leaves; the operator for operator nodes.
    pub text: Option<String>,
    pub children: Vec<Node>,
}

impl Node {
    fn leaf(kind: &'static str, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: Some(text.into()),
            children: Vec::new(),
        }
    }

    fn branch(kind: &'static str, children: Vec<Node>) -> Self {
        Self {
            kind,
            text: None,
            children,
        }
    }

    fn op(kind: &'static str, op: impl Into<String>, children: Vec<Node>) -> Self {
        Self {
            kind,
            text: Some(op.into()),
            children,
        }
    }

    /// S-expression of node kinds only, e.g. `(call (attribute (identifier) (identifier)) (argument_list))`.
    pub fn sexp(&self) -> String {
        let mut out = String::new();
        self.write_sexp(&mut out);
        out
    }

    fn write_sexp(&self, out: &mut String) {
        out.push('(');
        out.push_str(self.kind);
        for child in &self.children {
            out.push(' ');
            child.write_sexp(out);
        }
        out.push(')');
    }

    /// Pre-order walk.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Node)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

type PResult<T> = Result<T, ParseError>;

const AUG_OPS: [&str; 13] = [
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@=",
];
const COMPARE_OPS: [&str; 6] = ["==", "!=", "<", ">", "<=", ">="];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, off: usize) -> &Token {
        &self.toks[(self.pos + off).min(self.toks.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        let t = self.peek();
        t.kind == TokKind::Op && t.text == op
    }

    fn is_kw(&self, kw: &str) -> bool {
        let t = self.peek();
        t.kind == TokKind::Keyword && t.text == kw
    }

    fn is_kind(&self, kind: TokKind) -> bool {
        self.peek().kind == kind
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = self.peek();
        Err(ParseError::Syntax {
            line: t.line,
            message: format!("{} (at {:?} {:?})", message.into(), t.kind, t.text),
        })
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.error(format!("expected '{op}'"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected '{kw}'"))
        }
    }

    fn name(&mut self) -> PResult<Node> {
        if self.is_kind(TokKind::Name) {
            Ok(Node::leaf("identifier", self.bump().text))
        } else {
            self.error("expected a name")
        }
    }

    // ---- statements ----

    fn module(&mut self) -> PResult<Node> {
        let mut body = Vec::new();
        while !self.is_kind(TokKind::EndMarker) {
            if self.is_kind(TokKind::Newline) {
                self.bump();
                continue;
            }
            body.extend(self.statement()?);
        }
        Ok(Node::branch("module", body))
    }

    fn statement(&mut self) -> PResult<Vec<Node>> {
        let t = self.peek();
        if t.kind == TokKind::Keyword {
            let node = match t.text.as_str() {
                "if" => Some(self.if_statement()?),
                "while" => Some(self.while_statement()?),
                "for" => Some(self.for_statement()?),
                "try" => Some(self.try_statement()?),
                "with" => Some(self.with_statement()?),
                "def" => Some(self.function_definition()?),
                "class" => Some(self.class_definition()?),
                "async" => {
                    self.bump();
                    match self.peek().text.as_str() {
                        "def" => Some(self.function_definition()?),
                        "for" => Some(self.for_statement()?),
                        "with" => Some(self.with_statement()?),
                        _ => return self.error("expected def, for or with after async"),
                    }
                }
                _ => None,
            };
            if let Some(node) = node {
                return Ok(vec![node]);
            }
        }
        if self.is_op("@") {
            return Ok(vec![self.decorated()?]);
        }
        if self.is_kind(TokKind::Indent) {
            return self.error("unexpected indent");
        }
        self.simple_statements()
    }

    fn simple_statements(&mut self) -> PResult<Vec<Node>> {
        let mut out = vec![self.simple_statement()?];
        while self.eat_op(";") {
            if self.is_kind(TokKind::Newline) {
                break;
            }
            out.push(self.simple_statement()?);
        }
        if !self.is_kind(TokKind::Newline) {
            return self.error("expected end of statement");
        }
        self.bump();
        Ok(out)
    }

    fn simple_statement(&mut self) -> PResult<Node> {
        let t = self.peek().clone();
        if t.kind == TokKind::Keyword {
            match t.text.as_str() {
                "pass" => {
                    self.bump();
                    return Ok(Node::branch("pass_statement", vec![]));
                }
                "break" => {
                    self.bump();
                    return Ok(Node::branch("break_statement", vec![]));
                }
                "continue" => {
                    self.bump();
                    return Ok(Node::branch("continue_statement", vec![]));
                }
                "return" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_statement_end() {
                        children.push(self.star_expressions()?);
                    }
                    return Ok(Node::branch("return_statement", children));
                }
                "raise" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_statement_end() {
                        children.push(self.expression()?);
                        if self.eat_kw("from") {
                            children.push(self.expression()?);
                        }
                    }
                    return Ok(Node::branch("raise_statement", children));
                }
                "global" | "nonlocal" => {
                    self.bump();
                    let mut names = vec![self.name()?];
                    while self.eat_op(",") {
                        names.push(self.name()?);
                    }
                    let kind = if t.text == "global" {
                        "global_statement"
                    } else {
                        "nonlocal_statement"
                    };
                    return Ok(Node::branch(kind, names));
                }
                "del" => {
                    self.bump();
                    let targets = self.target_list()?;
                    return Ok(Node::branch("delete_statement", vec![targets]));
                }
                "assert" => {
                    self.bump();
                    let mut children = vec![self.expression()?];
                    if self.eat_op(",") {
                        children.push(self.expression()?);
                    }
                    return Ok(Node::branch("assert_statement", children));
                }
                "import" => return self.import_statement(),
                "from" => return self.import_from_statement(),
                _ => {}
            }
        }
        self.expression_statement()
    }

    fn at_statement_end(&self) -> bool {
        self.is_kind(TokKind::Newline) || self.is_op(";") || self.is_kind(TokKind::EndMarker)
    }

    fn dotted_name(&mut self) -> PResult<Node> {
        let mut parts = vec![self.name()?];
        while self.eat_op(".") {
            parts.push(self.name()?);
        }
        Ok(Node::branch("dotted_name", parts))
    }

    fn import_statement(&mut self) -> PResult<Node> {
        self.expect_kw("import")?;
        let mut items = Vec::new();
        loop {
            let name = self.dotted_name()?;
            if self.eat_kw("as") {
                let alias = self.name()?;
                items.push(Node::branch("aliased_import", vec![name, alias]));
            } else {
                items.push(name);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(Node::branch("import_statement", items))
    }

    fn import_from_statement(&mut self) -> PResult<Node> {
        self.expect_kw("from")?;
        let mut dots = String::new();
        while self.is_op(".") || self.is_op("...") {
            dots.push_str(&self.bump().text);
        }
        let mut children = Vec::new();
        if dots.is_empty() || !self.is_kw("import") {
            let module = self.dotted_name()?;
            if dots.is_empty() {
                children.push(module);
            } else {
                children.push(Node::branch("relative_import", vec![module]));
            }
        } else {
            children.push(Node::branch("relative_import", vec![]));
        }
        self.expect_kw("import")?;
        if self.eat_op("*") {
            children.push(Node::branch("wildcard_import", vec![]));
            return Ok(Node::branch("import_from_statement", children));
        }
        let parens = self.eat_op("(");
        loop {
            if parens && self.is_op(")") {
                break;
            }
            let name = self.dotted_name()?;
            if self.eat_kw("as") {
                let alias = self.name()?;
                children.push(Node::branch("aliased_import", vec![name, alias]));
            } else {
                children.push(name);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        if parens {
            self.expect_op(")")?;
        }
        Ok(Node::branch("import_from_statement", children))
    }

    fn expression_statement(&mut self) -> PResult<Node> {
        let first = if self.is_kw("yield") {
            self.yield_expr()?
        } else {
            self.star_expressions()?
        };
        if self.is_op("=") {
            return self.assignment_chain(first);
        }
        if self.is_kind(TokKind::Op) && AUG_OPS.contains(&self.peek().text.as_str()) {
            let op = self.bump().text;
            let value = if self.is_kw("yield") {
                self.yield_expr()?
            } else {
                self.star_expressions()?
            };
            return Ok(Node::op("augmented_assignment", op, vec![first, value]));
        }
        if self.eat_op(":") {
            let ann = self.expression()?;
            let mut children = vec![first, Node::branch("type", vec![ann])];
            if self.eat_op("=") {
                children.push(if self.is_kw("yield") {
                    self.yield_expr()?
                } else {
                    self.star_expressions()?
                });
            }
            return Ok(Node::branch("assignment", children));
        }
        Ok(Node::branch("expression_statement", vec![first]))
    }

    fn assignment_chain(&mut self, left: Node) -> PResult<Node> {
        self.expect_op("=")?;
        let right = if self.is_kw("yield") {
            self.yield_expr()?
        } else {
            self.star_expressions()?
        };
        let right = if self.is_op("=") {
            self.assignment_chain(right)?
        } else {
            right
        };
        Ok(Node::branch("assignment", vec![left, right]))
    }

    fn yield_expr(&mut self) -> PResult<Node> {
        self.expect_kw("yield")?;
        if self.eat_kw("from") {
            let e = self.expression()?;
            return Ok(Node::op("yield", "from", vec![e]));
        }
        if self.at_statement_end() || self.is_op(")") || self.is_op("=") {
            return Ok(Node::branch("yield", vec![]));
        }
        Ok(Node::branch("yield", vec![self.star_expressions()?]))
    }

    fn block(&mut self) -> PResult<Node> {
        self.expect_op(":")?;
        if !self.is_kind(TokKind::Newline) {
            return Ok(Node::branch("block", self.simple_statements()?));
        }
        self.bump();
        while self.is_kind(TokKind::Newline) {
            self.bump();
        }
        if !self.is_kind(TokKind::Indent) {
            return self.error("expected an indented block");
        }
        self.bump();
        let mut body = Vec::new();
        while !self.is_kind(TokKind::Dedent) && !self.is_kind(TokKind::EndMarker) {
            if self.is_kind(TokKind::Newline) {
                self.bump();
                continue;
            }
            body.extend(self.statement()?);
        }
        if self.is_kind(TokKind::Dedent) {
            self.bump();
        }
        Ok(Node::branch("block", body))
    }

    fn if_statement(&mut self) -> PResult<Node> {
        self.expect_kw("if")?;
        let mut children = vec![self.named_expression()?, self.block()?];
        loop {
            if self.eat_kw("elif") {
                let cond = self.named_expression()?;
                let body = self.block()?;
                children.push(Node::branch("elif_clause", vec![cond, body]));
            } else if self.eat_kw("else") {
                children.push(Node::branch("else_clause", vec![self.block()?]));
                break;
            } else {
                break;
            }
        }
        Ok(Node::branch("if_statement", children))
    }

    fn while_statement(&mut self) -> PResult<Node> {
        self.expect_kw("while")?;
        let mut children = vec![self.named_expression()?, self.block()?];
        if self.eat_kw("else") {
            children.push(Node::branch("else_clause", vec![self.block()?]));
        }
        Ok(Node::branch("while_statement", children))
    }

    fn for_statement(&mut self) -> PResult<Node> {
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.star_expressions()?;
        let mut children = vec![target, iter, self.block()?];
        if self.eat_kw("else") {
            children.push(Node::branch("else_clause", vec![self.block()?]));
        }
        Ok(Node::branch("for_statement", children))
    }

    fn try_statement(&mut self) -> PResult<Node> {
        self.expect_kw("try")?;
        let mut children = vec![self.block()?];
        let mut handlers = 0;
        while self.eat_kw("except") {
            handlers += 1;
            self.eat_op("*");
            let mut clause = Vec::new();
            if !self.is_op(":") {
                let ty = self.expression()?;
                if self.eat_kw("as") {
                    let name = self.name()?;
                    clause.push(Node::branch("as_pattern", vec![ty, Node::branch("as_pattern_target", vec![name])]));
                } else {
                    clause.push(ty);
                }
            }
            clause.push(self.block()?);
            children.push(Node::branch("except_clause", clause));
        }
        if handlers > 0 && self.eat_kw("else") {
            children.push(Node::branch("else_clause", vec![self.block()?]));
        }
        let has_finally = self.eat_kw("finally");
        if has_finally {
            children.push(Node::branch("finally_clause", vec![self.block()?]));
        }
        if handlers == 0 && !has_finally {
            return self.error("try without except or finally");
        }
        Ok(Node::branch("try_statement", children))
    }

    fn with_statement(&mut self) -> PResult<Node> {
        self.expect_kw("with")?;
        let mut items = Vec::new();
        loop {
            let value = self.expression()?;
            let item = if self.eat_kw("as") {
                let target = self.target()?;
                Node::branch("as_pattern", vec![value, Node::branch("as_pattern_target", vec![target])])
            } else {
                value
            };
            items.push(Node::branch("with_item", vec![item]));
            if !self.eat_op(",") {
                break;
            }
        }
        let clause = Node::branch("with_clause", items);
        let body = self.block()?;
        Ok(Node::branch("with_statement", vec![clause, body]))
    }

    fn decorated(&mut self) -> PResult<Node> {
        let mut children = Vec::new();
        while self.eat_op("@") {
            let e = self.named_expression()?;
            children.push(Node::branch("decorator", vec![e]));
            if !self.is_kind(TokKind::Newline) {
                return self.error("expected newline after decorator");
            }
            self.bump();
        }
        self.eat_kw("async");
        let def = if self.is_kw("def") {
            self.function_definition()?
        } else if self.is_kw("class") {
            self.class_definition()?
        } else {
            return self.error("expected def or class after decorator");
        };
        children.push(def);
        Ok(Node::branch("decorated_definition", children))
    }

    fn function_definition(&mut self) -> PResult<Node> {
        self.expect_kw("def")?;
        let name = self.name()?;
        self.expect_op("(")?;
        let params = self.parameters(")", true)?;
        self.expect_op(")")?;
        let mut children = vec![name, params];
        if self.eat_op("->") {
            let ret = self.expression()?;
            children.push(Node::branch("type", vec![ret]));
        }
        children.push(self.block()?);
        Ok(Node::branch("function_definition", children))
    }

    /// Parameter list up to (not including) `close`.
    fn parameters(&mut self, close: &str, annotations: bool) -> PResult<Node> {
        let mut params = Vec::new();
        while !self.is_op(close) {
            if self.eat_op("/") {
                params.push(Node::branch("positional_separator", vec![]));
            } else if self.eat_op("**") {
                let name = self.typed_name(annotations)?;
                params.push(Node::branch("dictionary_splat_pattern", vec![name]));
            } else if self.eat_op("*") {
                if self.is_op(",") || self.is_op(close) {
                    params.push(Node::branch("keyword_separator", vec![]));
                } else {
                    let name = self.typed_name(annotations)?;
                    params.push(Node::branch("list_splat_pattern", vec![name]));
                }
            } else {
                let name = self.typed_name(annotations)?;
                if self.eat_op("=") {
                    let default = self.expression()?;
                    let kind = if name.kind == "typed_parameter" {
                        "typed_default_parameter"
                    } else {
                        "default_parameter"
                    };
                    params.push(Node::branch(kind, vec![name, default]));
                } else {
                    params.push(name);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        let kind = if annotations {
            "parameters"
        } else {
            "lambda_parameters"
        };
        Ok(Node::branch(kind, params))
    }

    fn typed_name(&mut self, annotations: bool) -> PResult<Node> {
        let name = self.name()?;
        if annotations && self.eat_op(":") {
            let ann = self.expression()?;
            return Ok(Node::branch("typed_parameter", vec![name, Node::branch("type", vec![ann])]));
        }
        Ok(name)
    }

    fn class_definition(&mut self) -> PResult<Node> {
        self.expect_kw("class")?;
        let mut children = vec![self.name()?];
        if self.eat_op("(") {
            children.push(self.arguments()?);
        }
        children.push(self.block()?);
        Ok(Node::branch("class_definition", children))
    }

    // ---- targets ----

    fn target(&mut self) -> PResult<Node> {
        if self.eat_op("*") {
            let inner = self.bitor()?;
            return Ok(Node::branch("list_splat_pattern", vec![inner]));
        }
        self.bitor()
    }

    /// Comma-separated targets for `for`, `del` and comprehensions.
    fn target_list(&mut self) -> PResult<Node> {
        let first = self.target()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_kw("in") || self.at_statement_end() || self.is_op("=") {
                break;
            }
            items.push(self.target()?);
        }
        Ok(Node::branch("pattern_list", items))
    }

    // ---- expressions ----

    fn star_expressions(&mut self) -> PResult<Node> {
        let first = self.star_expression()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.expression_cannot_start() {
                break;
            }
            items.push(self.star_expression()?);
        }
        Ok(Node::branch("expression_list", items))
    }

    fn expression_cannot_start(&self) -> bool {
        let t = self.peek();
        match t.kind {
            TokKind::Newline | TokKind::EndMarker | TokKind::Indent | TokKind::Dedent => true,
            TokKind::Op => matches!(
                t.text.as_str(),
                ")" | "]" | "}" | "=" | ":" | ";" | ","
            ) || AUG_OPS.contains(&t.text.as_str()),
            TokKind::Keyword => matches!(t.text.as_str(), "in" | "for" | "if" | "else" | "as" | "from"),
            _ => false,
        }
    }

    fn star_expression(&mut self) -> PResult<Node> {
        if self.eat_op("*") {
            let inner = self.bitor()?;
            return Ok(Node::branch("list_splat", vec![inner]));
        }
        self.named_expression()
    }

    fn named_expression(&mut self) -> PResult<Node> {
        if self.is_kind(TokKind::Name) && self.peek_at(1).kind == TokKind::Op && self.peek_at(1).text == ":=" {
            let name = self.name()?;
            self.bump();
            let value = self.expression()?;
            return Ok(Node::branch("named_expression", vec![name, value]));
        }
        self.expression()
    }

    fn expression(&mut self) -> PResult<Node> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        let body = self.disjunction()?;
        if self.is_kw("if") {
            // `x for x in y if c` must leave the `if` to the comprehension.
            let save = self.pos;
            self.bump();
            let cond = self.disjunction()?;
            if !self.eat_kw("else") {
                self.pos = save;
                return Ok(body);
            }
            let alt = self.expression()?;
            return Ok(Node::branch("conditional_expression", vec![body, cond, alt]));
        }
        Ok(body)
    }

    fn expression_nocond(&mut self) -> PResult<Node> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        self.disjunction()
    }

    fn lambda(&mut self) -> PResult<Node> {
        self.expect_kw("lambda")?;
        let params = self.parameters(":", false)?;
        self.expect_op(":")?;
        let body = self.expression()?;
        let mut children = Vec::new();
        if !params.children.is_empty() {
            children.push(params);
        }
        children.push(body);
        Ok(Node::branch("lambda", children))
    }

    fn disjunction(&mut self) -> PResult<Node> {
        let mut left = self.conjunction()?;
        while self.eat_kw("or") {
            let right = self.conjunction()?;
            left = Node::op("boolean_operator", "or", vec![left, right]);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> PResult<Node> {
        let mut left = self.inversion()?;
        while self.eat_kw("and") {
            let right = self.inversion()?;
            left = Node::op("boolean_operator", "and", vec![left, right]);
        }
        Ok(left)
    }

    fn inversion(&mut self) -> PResult<Node> {
        if self.eat_kw("not") {
            let inner = self.inversion()?;
            return Ok(Node::branch("not_operator", vec![inner]));
        }
        self.comparison()
    }

    fn compare_op(&mut self) -> Option<String> {
        let t = self.peek().clone();
        match (t.kind, t.text.as_str()) {
            (TokKind::Op, op) if COMPARE_OPS.contains(&op) => {
                self.bump();
                Some(op.to_string())
            }
            (TokKind::Keyword, "in") => {
                self.bump();
                Some("in".into())
            }
            (TokKind::Keyword, "not") if self.peek_at(1).kind == TokKind::Keyword && self.peek_at(1).text == "in" => {
                self.bump();
                self.bump();
                Some("not in".into())
            }
            (TokKind::Keyword, "is") => {
                self.bump();
                if self.eat_kw("not") {
                    Some("is not".into())
                } else {
                    Some("is".into())
                }
            }
            _ => None,
        }
    }

    fn comparison(&mut self) -> PResult<Node> {
        let first = self.bitor()?;
        let mut operands = vec![first];
        let mut ops = Vec::new();
        while let Some(op) = self.compare_op() {
            ops.push(op);
            operands.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(operands.pop().expect("one operand"));
        }
        Ok(Node::op("comparison_operator", ops.join(" "), operands))
    }

    fn binary_level(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Node>) -> PResult<Node> {
        let mut left = next(self)?;
        loop {
            let t = self.peek();
            if t.kind == TokKind::Op && ops.contains(&t.text.as_str()) {
                let op = self.bump().text;
                let right = next(self)?;
                left = Node::op("binary_operator", op, vec![left, right]);
            } else {
                return Ok(left);
            }
        }
    }

    fn bitor(&mut self) -> PResult<Node> {
        self.binary_level(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<Node> {
        self.binary_level(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<Node> {
        self.binary_level(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<Node> {
        self.binary_level(&["<<", ">>"], Self::sum)
    }

    fn sum(&mut self) -> PResult<Node> {
        self.binary_level(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Node> {
        self.binary_level(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Node> {
        let t = self.peek();
        if t.kind == TokKind::Op && matches!(t.text.as_str(), "+" | "-" | "~") {
            let op = self.bump().text;
            let inner = self.factor()?;
            return Ok(Node::op("unary_operator", op, vec![inner]));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Node> {
        let base = if self.eat_kw("await") {
            Node::branch("await", vec![self.primary()?])
        } else {
            self.primary()?
        };
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Node::op("binary_operator", "**", vec![base, exp]));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Node> {
        let mut node = self.atom()?;
        loop {
            if self.eat_op(".") {
                let attr = self.name()?;
                node = Node::branch("attribute", vec![node, attr]);
            } else if self.eat_op("(") {
                let args = self.arguments()?;
                node = Node::branch("call", vec![node, args]);
            } else if self.eat_op("[") {
                let mut children = vec![node];
                children.extend(self.slices()?);
                self.expect_op("]")?;
                node = Node::branch("subscript", children);
            } else {
                return Ok(node);
            }
        }
    }

    /// Call arguments after the opening parenthesis, consuming the closing one.
    fn arguments(&mut self) -> PResult<Node> {
        let mut args = Vec::new();
        while !self.is_op(")") {
            if self.eat_op("**") {
                let e = self.expression()?;
                args.push(Node::branch("dictionary_splat", vec![e]));
            } else if self.eat_op("*") {
                let e = self.expression()?;
                args.push(Node::branch("list_splat", vec![e]));
            } else if self.is_kind(TokKind::Name) && self.peek_at(1).kind == TokKind::Op && self.peek_at(1).text == "=" {
                let name = self.name()?;
                self.bump();
                let value = self.expression()?;
                args.push(Node::branch("keyword_argument", vec![name, value]));
            } else {
                let e = self.named_expression()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let mut children = vec![e];
                    children.extend(self.comprehension_clauses()?);
                    args.push(Node::branch("generator_expression", children));
                } else {
                    args.push(e);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(Node::branch("argument_list", args))
    }

    fn slices(&mut self) -> PResult<Vec<Node>> {
        let mut out = Vec::new();
        loop {
            out.push(self.slice()?);
            if !self.eat_op(",") || self.is_op("]") {
                break;
            }
        }
        Ok(out)
    }

    fn slice(&mut self) -> PResult<Node> {
        let start = if self.is_op(":") {
            None
        } else if self.is_op("*") {
            return self.star_expression();
        } else {
            Some(self.named_expression()?)
        };
        if !self.is_op(":") {
            return Ok(start.expect("non-colon slice has an expression"));
        }
        let mut children: Vec<Node> = start.into_iter().collect();
        self.bump();
        if !self.is_op(":") && !self.is_op("]") && !self.is_op(",") {
            children.push(self.expression()?);
        }
        if self.eat_op(":") && !self.is_op("]") && !self.is_op(",") {
            children.push(self.expression()?);
        }
        Ok(Node::branch("slice", children))
    }

    fn comprehension_clauses(&mut self) -> PResult<Vec<Node>> {
        let mut clauses = Vec::new();
        loop {
            let is_async = self.is_kw("async");
            if is_async {
                self.bump();
            }
            if self.eat_kw("for") {
                let target = self.target_list()?;
                self.expect_kw("in")?;
                let iter = self.disjunction()?;
                clauses.push(Node::branch("for_in_clause", vec![target, iter]));
            } else if is_async {
                return self.error("expected for after async");
            } else if self.eat_kw("if") {
                let cond = self.expression_nocond()?;
                clauses.push(Node::branch("if_clause", vec![cond]));
            } else {
                return Ok(clauses);
            }
        }
    }

    fn atom(&mut self) -> PResult<Node> {
        let t = self.peek().clone();
        match t.kind {
            TokKind::Name => Ok(Node::leaf("identifier", self.bump().text)),
            TokKind::Number => {
                self.bump();
                let lower = t.text.to_ascii_lowercase();
                let is_float = !lower.starts_with("0x")
                    && (lower.contains('.') || lower.contains('e') || lower.ends_with('j'));
                Ok(Node::leaf(if is_float { "float" } else { "integer" }, t.text))
            }
            TokKind::Str => {
                let mut parts = vec![Node::leaf("string", self.bump().text)];
                while self.is_kind(TokKind::Str) {
                    parts.push(Node::leaf("string", self.bump().text));
                }
                if parts.len() == 1 {
                    Ok(parts.pop().expect("one part"))
                } else {
                    Ok(Node::branch("concatenated_string", parts))
                }
            }
            TokKind::Keyword => match t.text.as_str() {
                "True" => {
                    self.bump();
                    Ok(Node::leaf("true", "True"))
                }
                "False" => {
                    self.bump();
                    Ok(Node::leaf("false", "False"))
                }
                "None" => {
                    self.bump();
                    Ok(Node::leaf("none", "None"))
                }
                _ => self.error("unexpected keyword"),
            },
            TokKind::Op => match t.text.as_str() {
                "..." => {
                    self.bump();
                    Ok(Node::leaf("ellipsis", "..."))
                }
                "(" => self.paren(),
                "[" => self.list_display(),
                "{" => self.brace_display(),
                _ => self.error("unexpected token"),
            },
            _ => self.error("unexpected token"),
        }
    }

    fn paren(&mut self) -> PResult<Node> {
        self.expect_op("(")?;
        if self.eat_op(")") {
            return Ok(Node::branch("tuple", vec![]));
        }
        if self.is_kw("yield") {
            let y = self.yield_expr()?;
            self.expect_op(")")?;
            return Ok(Node::branch("parenthesized_expression", vec![y]));
        }
        let first = self.star_expression()?;
        if self.is_kw("for") || self.is_kw("async") {
            let mut children = vec![first];
            children.extend(self.comprehension_clauses()?);
            self.expect_op(")")?;
            return Ok(Node::branch("generator_expression", children));
        }
        if self.eat_op(")") {
            return Ok(Node::branch("parenthesized_expression", vec![first]));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op(")") {
                break;
            }
            items.push(self.star_expression()?);
        }
        self.expect_op(")")?;
        Ok(Node::branch("tuple", items))
    }

    fn list_display(&mut self) -> PResult<Node> {
        self.expect_op("[")?;
        if self.eat_op("]") {
            return Ok(Node::branch("list", vec![]));
        }
        let first = self.star_expression()?;
        if self.is_kw("for") || self.is_kw("async") {
            let mut children = vec![first];
            children.extend(self.comprehension_clauses()?);
            self.expect_op("]")?;
            return Ok(Node::branch("list_comprehension", children));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.star_expression()?);
        }
        self.expect_op("]")?;
        Ok(Node::branch("list", items))
    }

    fn dict_item(&mut self) -> PResult<Node> {
        if self.eat_op("**") {
            let e = self.bitor()?;
            return Ok(Node::branch("dictionary_splat", vec![e]));
        }
        let key = self.expression()?;
        self.expect_op(":")?;
        let value = self.expression()?;
        Ok(Node::branch("pair", vec![key, value]))
    }

    fn brace_display(&mut self) -> PResult<Node> {
        self.expect_op("{")?;
        if self.eat_op("}") {
            return Ok(Node::branch("dictionary", vec![]));
        }
        let is_dict = self.is_op("**") || {
            let save = self.pos;
            let probe = self.expression().is_ok() && self.is_op(":");
            self.pos = save;
            probe
        };
        if is_dict {
            let first = self.dict_item()?;
            if first.kind == "pair" && (self.is_kw("for") || self.is_kw("async")) {
                let mut children = vec![first];
                children.extend(self.comprehension_clauses()?);
                self.expect_op("}")?;
                return Ok(Node::branch("dictionary_comprehension", children));
            }
            let mut items = vec![first];
            while self.eat_op(",") {
                if self.is_op("}") {
                    break;
                }
                items.push(self.dict_item()?);
            }
            self.expect_op("}")?;
            return Ok(Node::branch("dictionary", items));
        }
        let first = self.star_expression()?;
        if self.is_kw("for") || self.is_kw("async") {
            let mut children = vec![first];
            children.extend(self.comprehension_clauses()?);
            self.expect_op("}")?;
            return Ok(Node::branch("set_comprehension", children));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("}") {
                break;
            }
            items.push(self.star_expression()?);
        }
        self.expect_op("}")?;
        Ok(Node::branch("set", items))
    }
}

/// Parses a whole module.
pub fn parse_module(src: &str) -> Result<Node, ParseError> {
    let toks = tokenize(src)?;
    let mut parser = Parser { toks, pos: 0 };
    parser.module()
}
