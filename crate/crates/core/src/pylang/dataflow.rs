//! Def-use edges over simple names.
//!
//! Statements are visited in source order with one flat set of defined
//! names (no scopes). Each read of an already-defined name yields
//! `DefUse(name)`; each assignment yields `ComputedFrom(target, source)`
//! for every target name and every name read on its right-hand side.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::parser::Node;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataflowEdge {
    DefUse(String),
    ComputedFrom(String, String),
}

#[derive(Default)]
struct Flow {
    defined: HashSet<String>,
    edges: Vec<DataflowEdge>,
}

fn ident(node: &Node) -> Option<&str> {
    (node.kind == "identifier").then_some(node.text.as_deref()).flatten()
}

/// Names read by an expression, in order, with duplicates. Attribute names,
/// keyword-argument names and names bound inside lambdas or
/// comprehensions are excluded.
fn reads(node: &Node, out: &mut Vec<String>) {
    match node.kind {
        "identifier" => out.extend(node.text.clone()),
        "attribute" => reads(&node.children[0], out),
        "keyword_argument" => {
            if let Some(value) = node.children.get(1) {
                reads(value, out);
            }
        }
        "lambda" => {
            let mut bound = Vec::new();
            let mut inner = Vec::new();
            for child in &node.children {
                if child.kind == "lambda_parameters" {
                    for p in &child.children {
                        if p.kind == "default_parameter" {
                            bound.extend(ident(&p.children[0]).map(str::to_string));
                            reads(&p.children[1], out);
                        } else {
                            let mut names = Vec::new();
                            targets(p, &mut names);
                            bound.extend(names);
                        }
                    }
                } else {
                    reads(child, &mut inner);
                }
            }
            out.extend(inner.into_iter().filter(|n| !bound.contains(n)));
        }
        "list_comprehension" | "set_comprehension" | "dictionary_comprehension" | "generator_expression" => {
            let mut bound = Vec::new();
            let mut inner = Vec::new();
            for child in &node.children {
                if child.kind == "for_in_clause" {
                    targets(&child.children[0], &mut bound);
                    reads(&child.children[1], &mut inner);
                } else {
                    reads(child, &mut inner);
                }
            }
            out.extend(inner.into_iter().filter(|n| !bound.contains(n)));
        }
        _ => {
            for child in &node.children {
                reads(child, out);
            }
        }
    }
}

/// Names bound by an assignment target.
fn targets(node: &Node, out: &mut Vec<String>) {
    match node.kind {
        "identifier" => out.extend(node.text.clone()),
        "pattern_list" | "expression_list" | "tuple" | "list" | "parenthesized_expression"
        | "list_splat" | "list_splat_pattern" | "typed_parameter" | "dictionary_splat_pattern" => {
            for child in &node.children {
                if child.kind != "type" {
                    targets(child, out);
                }
            }
        }
        _ => {}
    }
}

/// Names read inside a target, e.g. `a` and `i` in `a[i] = v`.
fn target_reads(node: &Node, out: &mut Vec<String>) {
    match node.kind {
        "identifier" => {}
        "subscript" | "attribute" => reads(node, out),
        _ => {
            for child in &node.children {
                target_reads(child, out);
            }
        }
    }
}

impl Flow {
    fn use_names(&mut self, names: &[String]) {
        for name in names {
            if self.defined.contains(name) {
                self.edges.push(DataflowEdge::DefUse(name.clone()));
            }
        }
    }

    fn use_expr(&mut self, node: &Node) {
        let mut names = Vec::new();
        reads(node, &mut names);
        self.use_names(&names);
    }

    fn bind(&mut self, target: &Node, sources: &[String]) {
        let mut inner = Vec::new();
        target_reads(target, &mut inner);
        self.use_names(&inner);
        let mut names = Vec::new();
        targets(target, &mut names);
        for t in &names {
            for s in sources {
                self.edges.push(DataflowEdge::ComputedFrom(t.clone(), s.clone()));
            }
        }
        self.defined.extend(names);
    }

    fn define(&mut self, name: &str) {
        self.defined.insert(name.to_string());
    }

    fn assignment(&mut self, node: &Node) {
        // assignment(left, [type], right) where right may itself be an assignment.
        let left = &node.children[0];
        let value = node.children.iter().skip(1).find(|c| c.kind != "type");
        let Some(value) = value else {
            let mut names = Vec::new();
            targets(left, &mut names);
            self.defined.extend(names);
            return;
        };
        let sources = if value.kind == "assignment" {
            self.assignment(value);
            let mut innermost = value;
            while innermost.kind == "assignment" {
                innermost = innermost.children.last().expect("assignment has a value");
            }
            let mut r = Vec::new();
            reads(innermost, &mut r);
            r
        } else {
            let mut r = Vec::new();
            reads(value, &mut r);
            self.use_names(&r);
            r
        };
        self.bind(left, &sources);
    }

    fn statement(&mut self, node: &Node) {
        match node.kind {
            "assignment" => self.assignment(node),
            "augmented_assignment" => {
                let (left, value) = (&node.children[0], &node.children[1]);
                let mut sources = Vec::new();
                reads(left, &mut sources);
                reads(value, &mut sources);
                self.use_names(&sources);
                let mut names = Vec::new();
                targets(left, &mut names);
                for t in &names {
                    for s in &sources {
                        self.edges.push(DataflowEdge::ComputedFrom(t.clone(), s.clone()));
                    }
                }
                self.defined.extend(names);
            }
            "import_statement" | "import_from_statement" => {
                for item in &node.children {
                    match item.kind {
                        "aliased_import" => {
                            if let Some(alias) = item.children.get(1).and_then(ident) {
                                self.define(alias);
                            }
                        }
                        "dotted_name" if node.kind == "import_statement" => {
                            if let Some(first) = item.children.first().and_then(ident) {
                                self.define(first);
                            }
                        }
                        "dotted_name" => {
                            // The first child of a from-import is the module.
                            if !std::ptr::eq(item, &node.children[0]) {
                                if let Some(last) = item.children.last().and_then(ident) {
                                    self.define(last);
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
            "for_statement" => {
                let (target, iter) = (&node.children[0], &node.children[1]);
                let mut sources = Vec::new();
                reads(iter, &mut sources);
                self.use_names(&sources);
                self.bind(target, &sources);
                for child in &node.children[2..] {
                    self.statement(child);
                }
            }
            "with_item" => {
                let item = &node.children[0];
                if item.kind == "as_pattern" {
                    let mut sources = Vec::new();
                    reads(&item.children[0], &mut sources);
                    self.use_names(&sources);
                    if let Some(target) = item.children[1].children.first() {
                        self.bind(target, &sources);
                    }
                } else {
                    self.use_expr(item);
                }
            }
            "except_clause" => {
                for child in &node.children {
                    if child.kind == "as_pattern" {
                        self.use_expr(&child.children[0]);
                        if let Some(name) = child.children[1].children.first().and_then(ident) {
                            self.define(name);
                        }
                    } else {
                        self.statement(child);
                    }
                }
            }
            "function_definition" => {
                if let Some(name) = node.children.first().and_then(ident) {
                    self.define(name);
                }
                for child in &node.children[1..] {
                    match child.kind {
                        "parameters" => {
                            for p in &child.children {
                                if matches!(p.kind, "default_parameter" | "typed_default_parameter") {
                                    self.use_expr(&p.children[1]);
                                    let mut names = Vec::new();
                                    targets(&p.children[0], &mut names);
                                    self.defined.extend(names);
                                } else {
                                    let mut names = Vec::new();
                                    targets(p, &mut names);
                                    self.defined.extend(names);
                                }
                            }
                        }
                        "type" => self.use_expr(child),
                        _ => self.statement(child),
                    }
                }
            }
            "class_definition" => {
                if let Some(name) = node.children.first().and_then(ident) {
                    self.define(name);
                }
                for child in &node.children[1..] {
                    if child.kind == "argument_list" {
                        self.use_expr(child);
                    } else {
                        self.statement(child);
                    }
                }
            }
            "module" | "block" | "if_statement" | "elif_clause" | "else_clause" | "while_statement"
            | "try_statement" | "finally_clause" | "with_statement" | "with_clause"
            | "decorated_definition" => {
                for child in &node.children {
                    self.statement(child);
                }
            }
            "global_statement" | "nonlocal_statement" => {
                for child in &node.children {
                    if let Some(name) = ident(child) {
                        self.define(name);
                    }
                }
            }
            "pass_statement" | "break_statement" | "continue_statement" => {}
            _ => self.use_expr(node),
        }
    }
}

/// Def-use and computed-from edges of a parsed module, in visit order.
pub fn dataflow_edges(module: &Node) -> Vec<DataflowEdge> {
    let mut flow = Flow::default();
    flow.statement(module);
    flow.edges
}
