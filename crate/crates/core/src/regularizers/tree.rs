//! Hierarchical heading codes (`Name [M01.060.116]`) and tree distances.
//!
//! Each dot-separated segment of a code is a node and the code minus its last
//! segment is its parent. Top-level codes hang off a virtual root, so every
//! pair of headings is connected.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heading {
    pub name: String,
    pub code: Vec<String>,
}

impl Heading {
    pub fn code_string(&self) -> String {
        self.code.join(".")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadingTree {
    pub headings: Vec<Heading>,
}

fn parse_line(line: &str, number: usize) -> Result<Heading> {
    let err = |message: &str| Error::Parse {
        line: number,
        message: format!("{message}: {line:?}"),
    };
    let line = line.trim();
    if !line.ends_with(']') {
        return Err(err("expected `Name [code]`"));
    }
    let open = line.rfind('[').ok_or_else(|| err("missing `[`"))?;
    let name = line[..open].trim();
    if name.is_empty() {
        return Err(err("empty heading name"));
    }
    let code_str = &line[open + 1..line.len() - 1];
    let code: Vec<String> = code_str.split('.').map(|s| s.trim().to_string()).collect();
    if code.iter().any(|s| s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric())) {
        return Err(err("malformed code"));
    }
    Ok(Heading {
        name: name.to_string(),
        code,
    })
}

impl HeadingTree {
    /// One heading per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<HeadingTree> {
        let mut headings = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let h = parse_line(trimmed, i + 1)?;
            if !seen.insert(h.code.clone()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate code {}", h.code_string()),
                });
            }
            headings.push(h);
        }
        Ok(HeadingTree { headings })
    }

    pub fn load(path: &Path) -> Result<HeadingTree> {
        HeadingTree::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.headings
            .iter()
            .map(|h| format!("{} [{}]\n", h.name, h.code_string()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.headings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headings.is_empty()
    }

    /// Number of edges between headings `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.headings[i].code, &self.headings[j].code);
        let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
        a.len() + b.len() - 2 * common
    }

    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.distance(i, j) as f64)
    }
}

/// `O` (edge counts) and `O*` (`1/O` off the diagonal, `1` on it).
pub fn build_tree_distance(tree: &HeadingTree) -> (DMatrix<f64>, DMatrix<f64>) {
    let o = tree.distance_matrix();
    let o_star = DMatrix::from_fn(o.nrows(), o.ncols(), |i, j| if i == j { 1.0 } else { 1.0 / o[(i, j)] });
    (o, o_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
# three generations
Adult [M01.060.116]
Aged [M01.060.116.100]
Aged, 80 and over [M01.060.116.100.080]
Statins [D27.505]
";

    #[test]
    fn example_generations() {
        let tree = HeadingTree::parse(EXAMPLE).unwrap();
        assert_eq!(tree.len(), 4);
        assert_eq!(tree.headings[2].name, "Aged, 80 and over");
        assert_eq!(tree.distance(0, 1), 1);
        assert_eq!(tree.distance(0, 2), 2);
        assert_eq!(tree.distance(1, 2), 1);
        // through the virtual root: 3 up, 2 down
        assert_eq!(tree.distance(0, 3), 5);
    }

    #[test]
    fn o_star_has_unit_diagonal() {
        let tree = HeadingTree::parse(EXAMPLE).unwrap();
        let (o, os) = build_tree_distance(&tree);
        for i in 0..4 {
            assert_eq!(o[(i, i)], 0.0);
            assert_eq!(os[(i, i)], 1.0);
        }
        assert_eq!(os[(0, 2)], 0.5);
        assert_eq!(os, os.transpose());
    }

    #[test]
    fn malformed_code_reports_line() {
        let text = "Adult [M01.060]\n\nBroken [M01..7]\n";
        match HeadingTree::parse(text) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(HeadingTree::parse("No code here"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_codes_rejected() {
        assert!(HeadingTree::parse("A [X1]\nB [X1]").is_err());
    }

    #[test]
    fn text_round_trip() {
        let tree = HeadingTree::parse(EXAMPLE).unwrap();
        assert_eq!(HeadingTree::parse(&tree.to_text()).unwrap(), tree);
    }
}
