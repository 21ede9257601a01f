//! Lexing, parsing and def-use analysis for the generated Python scripts.

mod dataflow;
mod lexer;
mod parser;

pub use dataflow::{dataflow_edges, DataflowEdge};
pub use lexer::{code_tokens, is_keyword, tokenize, LexError, TokKind, Token, KEYWORDS};
pub use parser::{parse_module, Node, ParseError};

/// S-expressions of every node that has children, in pre-order.
pub fn subtree_sexps(root: &Node) -> Vec<String> {
    let mut out = Vec::new();
    root.walk(&mut |n| {
        if !n.children.is_empty() {
            out.push(n.sexp());
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtrees_of_simple_assignment() {
        let tree = parse_module("y = x\n").unwrap();
        assert_eq!(
            subtree_sexps(&tree),
            vec!["(module (assignment (identifier) (identifier)))", "(assignment (identifier) (identifier))"]
        );
    }
}
