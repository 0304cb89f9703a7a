//! Rooted binary trees stored in an arena, with Newick input and output.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Branch length assigned when a Newick edge has none.
pub const DEFAULT_BRANCH_LENGTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: Option<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Length of the edge to the parent; ignored at the root.
    pub branch_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyloTree {
    pub nodes: Vec<Node>,
    pub root: usize,
}

impl PhyloTree {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.nodes[v].children.is_empty()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        self.postorder()
            .into_iter()
            .filter(|&v| self.is_leaf(v))
            .collect()
    }

    pub fn leaf_names(&self) -> Vec<String> {
        self.leaves()
            .into_iter()
            .map(|v| self.nodes[v].name.clone().unwrap_or_default())
            .collect()
    }

    /// Children before parents, left subtree first.
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
            } else {
                stack.push((v, true));
                for &c in self.nodes[v].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Non-root nodes, each standing for the edge above it.
    pub fn edges(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&v| v != self.root).collect()
    }

    pub fn branch_lengths(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.branch_length).collect()
    }

    /// Every internal node has exactly two children and every leaf a unique name.
    pub fn check_binary(&self) -> Result<()> {
        for (v, n) in self.nodes.iter().enumerate() {
            if !n.children.is_empty() && n.children.len() != 2 {
                return Err(Error::Input(format!(
                    "tree is not binary: node {} has {} children",
                    n.name.as_deref().unwrap_or(&v.to_string()),
                    n.children.len()
                )));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for v in self.leaves() {
            match &self.nodes[v].name {
                None => return Err(Error::Input("tree has an unnamed leaf".into())),
                Some(name) if !names.insert(name.clone()) => {
                    return Err(Error::Input(format!("leaf name {name:?} appears twice")));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

struct NewickParser<'a> {
    text: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
}

impl NewickParser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        let before = &self.text[..self.pos.min(self.text.len())];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        Error::parse(line, column, message)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn label(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(&b) = self.text.get(self.pos) {
            if b"(),:;".contains(&b) || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start)
            .then(|| String::from_utf8_lossy(&self.text[start..self.pos]).into_owned())
    }

    fn subtree(&mut self, parent: Option<usize>) -> Result<usize> {
        let id = self.nodes.len();
        self.nodes.push(Node {
            name: None,
            parent,
            children: Vec::new(),
            branch_length: DEFAULT_BRANCH_LENGTH,
        });
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                let child = self.subtree(Some(id))?;
                self.nodes[id].children.push(child);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected ',' or ')'")),
                }
            }
        }
        self.nodes[id].name = self.label();
        if self.nodes[id].children.is_empty() && self.nodes[id].name.is_none() {
            return Err(self.error("leaf without a name"));
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            let token = self
                .label()
                .ok_or_else(|| self.error("missing branch length after ':'"))?;
            let len: f64 = token
                .parse()
                .map_err(|_| self.error(format!("invalid branch length {token:?}")))?;
            if !(len.is_finite() && len >= 0.0) {
                return Err(self.error(format!(
                    "branch length {token} must be finite and nonnegative"
                )));
            }
            self.nodes[id].branch_length = len;
        }
        Ok(id)
    }
}

/// Parses one Newick tree terminated by `;`.
pub fn parse_newick(text: &[u8]) -> Result<PhyloTree> {
    let mut p = NewickParser {
        text,
        pos: 0,
        nodes: Vec::new(),
    };
    if p.peek().is_none() {
        return Err(p.error("empty tree"));
    }
    let root = p.subtree(None)?;
    if p.peek() != Some(b';') {
        return Err(p.error("expected ';' at the end of the tree"));
    }
    p.pos += 1;
    if p.peek().is_some() {
        return Err(p.error("unexpected text after ';'"));
    }
    Ok(PhyloTree {
        nodes: p.nodes,
        root,
    })
}

/// Writes the tree with the given per-node branch lengths (indexed like `nodes`).
pub fn write_newick(tree: &PhyloTree, branch_lengths: &[f64]) -> String {
    fn go(tree: &PhyloTree, lens: &[f64], v: usize, out: &mut String) {
        let n = &tree.nodes[v];
        if !n.children.is_empty() {
            out.push('(');
            for (i, &c) in n.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                go(tree, lens, c, out);
            }
            out.push(')');
        }
        if let Some(name) = &n.name {
            out.push_str(name);
        }
        if v != tree.root {
            out.push_str(&format!(":{}", lens[v]));
        }
    }
    let mut out = String::new();
    go(tree, branch_lengths, tree.root, &mut out);
    out.push(';');
    out
}
