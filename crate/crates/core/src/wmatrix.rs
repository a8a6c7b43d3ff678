//! Penalty matrices `W` for the domain-aware loss.
//!
//! Row convention: `W[i][j]` is the cost of predicting class `j` when the truth
//! is class `i`. The loss reads the row of the true class, so `W` need not be
//! symmetric. Every valid matrix has an exactly-zero diagonal, entries in
//! `[0, 1]`, and at least three classes.
//!
//! Two builders are provided:
//! - [`build_w_cm`]: from a confusion matrix of a model trained without the
//!   penalty. `W[i][j] = max(floor, 1 - C[i][j] / rowsum_i)` off the diagonal, so
//!   classes that are already confused with each other are penalized less.
//! - [`build_w_hc`]: from grouping levels. `W[i][j]` is the fraction of levels
//!   at which `i` and `j` fall in different groups.
//!
//! W-CSV: `n` lines of `n` comma-separated decimals; `#` lines are comments and
//! the first may read `# classes: a,b,c`.
//!
//! Hierarchy CSV: header `class,level1,level2,...`, then one row per class in
//! index order holding the class index followed by integer group ids.

use std::fmt;
use std::path::Path;

use crate::metrics::ConfusionMatrix;
use crate::MIN_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewClasses { n: usize },
    NotSquare { row: usize, len: usize, n: usize },
    NonZeroDiagonal { index: usize, value: f64 },
    OutOfRange { row: usize, col: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewClasses { n } => {
                write!(
                    f,
                    "matrix is {n}x{n}; at least {MIN_CLASSES} classes required"
                )
            }
            Violation::NotSquare { row, len, n } => {
                write!(f, "row {row} has {len} entries, expected {n}")
            }
            Violation::NonZeroDiagonal { index, value } => {
                write!(f, "diagonal entry ({index},{index}) is {value}, must be 0")
            }
            Violation::OutOfRange { row, col, value } => {
                write!(f, "entry ({row},{col}) = {value} is outside [0, 1]")
            }
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum WMatrixError {
    #[error("invalid penalty matrix: {}", join_violations(.0))]
    InvalidMatrix(Vec<Violation>),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("class {class} has no samples in the confusion matrix")]
    EmptyRow { class: usize },
    #[error("floor must lie in [0, 1), got {0}")]
    BadFloor(f64),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Checks a candidate matrix against every penalty-matrix rule and returns all
/// findings; an empty list means the matrix is valid.
pub fn validate_w<R: AsRef<[f64]>>(rows: &[R]) -> Vec<Violation> {
    let n = rows.len();
    let mut findings = Vec::new();
    if n < MIN_CLASSES {
        findings.push(Violation::TooFewClasses { n });
    }
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != n {
            findings.push(Violation::NotSquare {
                row: i,
                len: row.len(),
                n,
            });
        }
        for (j, &value) in row.iter().enumerate() {
            if i == j {
                if value != 0.0 {
                    findings.push(Violation::NonZeroDiagonal { index: i, value });
                }
            } else if !(0.0..=1.0).contains(&value) {
                findings.push(Violation::OutOfRange {
                    row: i,
                    col: j,
                    value,
                });
            }
        }
    }
    findings
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl PenaltyMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, WMatrixError> {
        let findings = validate_w(rows);
        if !findings.is_empty() {
            return Err(WMatrixError::InvalidMatrix(findings));
        }
        Ok(Self {
            n: rows.len(),
            entries: rows
                .iter()
                .flat_map(|r| r.as_ref().iter().copied())
                .collect(),
        })
    }

    pub fn zeros(n: usize) -> Result<Self, WMatrixError> {
        Self::from_rows(&vec![vec![0.0; n]; n])
    }

    /// Every off-diagonal entry equal to 1.
    pub fn uniform(n: usize) -> Result<Self, WMatrixError> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Penalties for each prediction when the truth is `class`.
    pub fn row(&self, class: usize) -> &[f64] {
        &self.entries[class * self.n..(class + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `alpha * W`; fails if that leaves `[0, 1]`.
    pub fn scaled(&self, alpha: f64) -> Result<Self, WMatrixError> {
        let rows: Vec<Vec<f64>> = self
            .rows()
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * alpha).collect())
            .collect();
        Self::from_rows(&rows)
    }
}

/// Class groupings at one or more independent levels. `groups[level][class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySpec {
    num_classes: usize,
    groups: Vec<Vec<i64>>,
}

impl HierarchySpec {
    pub fn new(num_classes: usize, groups: Vec<Vec<i64>>) -> Result<Self, WMatrixError> {
        if num_classes < MIN_CLASSES {
            return Err(WMatrixError::InvalidHierarchy(format!(
                "{num_classes} classes; at least {MIN_CLASSES} required"
            )));
        }
        if groups.is_empty() {
            return Err(WMatrixError::InvalidHierarchy("no grouping levels".into()));
        }
        if let Some(level) = groups.iter().position(|g| g.len() != num_classes) {
            return Err(WMatrixError::InvalidHierarchy(format!(
                "level {} assigns {} classes, expected {num_classes}",
                level + 1,
                groups[level].len()
            )));
        }
        Ok(Self {
            num_classes,
            groups,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_levels(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, level: usize, class: usize) -> i64 {
        self.groups[level][class]
    }

    /// Number of levels at which the two classes share a group.
    pub fn shared_levels(&self, i: usize, j: usize) -> usize {
        self.groups.iter().filter(|g| g[i] == g[j]).count()
    }

    pub fn from_csv(text: &str) -> Result<Self, WMatrixError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(WMatrixError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"class") || cols.len() < 2 {
            return Err(WMatrixError::Parse {
                line: hline,
                message: "header must be `class,level1,...`".into(),
            });
        }
        let num_levels = cols.len() - 1;
        let mut groups = vec![Vec::new(); num_levels];
        for (expected_class, (line, row)) in lines.enumerate() {
            let cells: Vec<&str> = row.split(',').map(str::trim).collect();
            if cells.len() != cols.len() {
                return Err(WMatrixError::Parse {
                    line,
                    message: format!("{} cells, header has {}", cells.len(), cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<i64>().map_err(|e| WMatrixError::Parse {
                    line,
                    message: format!("`{s}`: {e}"),
                })
            };
            let class = parse(cells[0])?;
            if class != expected_class as i64 {
                return Err(WMatrixError::InvalidHierarchy(format!(
                    "line {line}: expected class {expected_class}, found {class}"
                )));
            }
            for (level, cell) in cells[1..].iter().enumerate() {
                groups[level].push(parse(cell)?);
            }
        }
        let num_classes = groups[0].len();
        Self::new(num_classes, groups)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for l in 1..=self.num_levels() {
            out.push_str(&format!(",level{l}"));
        }
        out.push('\n');
        for c in 0..self.num_classes {
            out.push_str(&c.to_string());
            for g in &self.groups {
                out.push_str(&format!(",{}", g[c]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_w_hc(spec: &HierarchySpec) -> PenaltyMatrix {
    let n = spec.num_classes;
    let levels = spec.num_levels() as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        (spec.num_levels() - spec.shared_levels(i, j)) as f64 / levels
                    }
                })
                .collect()
        })
        .collect();
    PenaltyMatrix::from_rows(&rows).expect("disagreement fractions lie in [0, 1]")
}

pub fn build_w_cm(confusion: &ConfusionMatrix, floor: f64) -> Result<PenaltyMatrix, WMatrixError> {
    if !(0.0..1.0).contains(&floor) {
        return Err(WMatrixError::BadFloor(floor));
    }
    let n = confusion.n;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let total = confusion.row_sum(i);
        if total == 0 {
            return Err(WMatrixError::EmptyRow { class: i });
        }
        rows.push(
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let rate = confusion.counts[i][j] as f64 / total as f64;
                        (1.0 - rate).max(floor)
                    }
                })
                .collect::<Vec<f64>>(),
        );
    }
    PenaltyMatrix::from_rows(&rows)
}

/// W-CSV text. Values use the shortest decimal that parses back to the same `f64`.
pub fn write_w_csv(w: &PenaltyMatrix, class_names: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(names) = class_names {
        out.push_str(&format!("# classes: {}\n", names.join(",")));
    }
    for i in 0..w.n() {
        let cells: Vec<String> = w.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses W-CSV text, returning the matrix and the class names if present.
pub fn parse_w_csv(text: &str) -> Result<(PenaltyMatrix, Option<Vec<String>>), WMatrixError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(list) = comment.trim().strip_prefix("classes:") {
                if rows.is_empty() && names.is_none() {
                    names = Some(list.split(',').map(|s| s.trim().to_string()).collect());
                }
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| WMatrixError::Parse {
                    line: i + 1,
                    message: format!("`{}`: {e}", c.trim()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(WMatrixError::Parse {
                    line: i + 1,
                    message: format!(
                        "ragged row: {} cells, first row has {}",
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    let w = PenaltyMatrix::from_rows(&rows)?;
    Ok((w, names))
}

pub fn save_w(w: &PenaltyMatrix, path: impl AsRef<Path>) -> Result<(), WMatrixError> {
    Ok(std::fs::write(path, write_w_csv(w, None))?)
}

pub fn load_w(path: impl AsRef<Path>) -> Result<PenaltyMatrix, WMatrixError> {
    parse_w_csv(&std::fs::read_to_string(path)?).map(|(w, _)| w)
}
