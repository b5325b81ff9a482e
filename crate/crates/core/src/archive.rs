//! Versioned, human-readable model persistence.
//!
//! The archive is a line-oriented text document: dimensions, the rule base,
//! the readout matrix, the normalization record, the class-name table, and
//! provenance (seed plus a digest of the run configuration). Floats are
//! written with 17 significant digits, so a save/load round trip reproduces
//! bit-identical inference. A version mismatch is rejected, never coerced.

use std::path::Path;

use crate::csvio::{fmt_float, write_atomic};
use crate::dataset::Normalization;
use crate::error::{Result, TnfsError};
use crate::linalg::Matrix;
use crate::model::{GaussianTerm, ModelDims, Rule, RuleAntecedent, RuleConsequent, TnfsModel};
use crate::Scalar;

pub const ARCHIVE_MAGIC: &str = "tnfs-archive";
pub const ARCHIVE_VERSION: u32 = 1;

/// A model plus everything needed to use it on raw data: the normalization
/// record, output class names (or forecast channel names), and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArchive<F> {
    pub model: TnfsModel<F>,
    pub normalization: Normalization<F>,
    /// Names of the output components: fault classes for classifiers,
    /// channel names for forecasters.
    pub class_names: Vec<String>,
    pub seed: u64,
    pub config_digest: String,
}

impl<F: Scalar> ModelArchive<F> {
    pub fn new(
        model: TnfsModel<F>,
        normalization: Normalization<F>,
        class_names: Vec<String>,
        seed: u64,
        config_digest: String,
    ) -> Self {
        ModelArchive {
            model,
            normalization,
            class_names,
            seed,
            config_digest,
        }
    }

    pub fn to_text(&self) -> String {
        let ModelDims { state: n, input: m, output: p } = self.model.dims;
        let mut out = String::new();
        out.push_str(ARCHIVE_MAGIC);
        out.push('\n');
        out.push_str(&format!("format_version {ARCHIVE_VERSION}\n"));
        out.push_str(&format!("seed {}\n", self.seed));
        let digest = if self.config_digest.is_empty() {
            "-"
        } else {
            &self.config_digest
        };
        out.push_str(&format!("config_digest {digest}\n"));
        out.push_str(&format!("dims {n} {m} {p} {}\n", self.model.rule_count()));
        out.push_str(&format!("initial_state {n}\n"));
        for v in &self.model.initial_state {
            out.push_str(&fmt_float(v.to_f64().unwrap()));
            out.push('\n');
        }
        out.push_str(&format!("class_names {}\n", self.class_names.len()));
        for name in &self.class_names {
            out.push_str(name);
            out.push('\n');
        }
        out.push_str(&format!("normalization {}\n", self.normalization.len()));
        for (mean, std) in self.normalization.means.iter().zip(&self.normalization.stds) {
            out.push_str(&format!(
                "{} {}\n",
                fmt_float(mean.to_f64().unwrap()),
                fmt_float(std.to_f64().unwrap())
            ));
        }
        for (r, rule) in self.model.rules.iter().enumerate() {
            out.push_str(&format!("rule {r}\n"));
            for t in &rule.antecedent.state_terms {
                out.push_str(&format!(
                    "state_term {} {}\n",
                    fmt_float(t.center.to_f64().unwrap()),
                    fmt_float(t.width.to_f64().unwrap())
                ));
            }
            for t in &rule.antecedent.input_terms {
                out.push_str(&format!(
                    "input_term {} {}\n",
                    fmt_float(t.center.to_f64().unwrap()),
                    fmt_float(t.width.to_f64().unwrap())
                ));
            }
            push_matrix(&mut out, "a", &rule.consequent.a);
            push_matrix(&mut out, "b", &rule.consequent.b);
        }
        push_matrix(&mut out, "output_matrix", &self.model.output_matrix);
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TnfsError::io(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| match e {
            TnfsError::Format { detail, .. } => TnfsError::Format {
                path: path.display().to_string(),
                detail,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Cursor::new(text);
        if lines.next_line()? != ARCHIVE_MAGIC {
            return Err(bad("missing archive magic line"));
        }
        let version: u32 = lines.field("format_version")?;
        if version != ARCHIVE_VERSION {
            return Err(TnfsError::VersionMismatch {
                found: version,
                supported: ARCHIVE_VERSION,
            });
        }
        let seed: u64 = lines.field("seed")?;
        let config_digest = {
            let raw: String = lines.field("config_digest")?;
            if raw == "-" {
                String::new()
            } else {
                raw
            }
        };
        let dims_line = lines.tagged("dims")?;
        let dims_parts = parse_usizes(&dims_line, 4)?;
        let dims = ModelDims::new(dims_parts[0], dims_parts[1], dims_parts[2]);
        let rule_count = dims_parts[3];

        let x0_len: usize = lines.field("initial_state")?;
        let mut initial_state = Vec::with_capacity(x0_len);
        for _ in 0..x0_len {
            initial_state.push(lines.float::<F>()?);
        }

        let name_count: usize = lines.field("class_names")?;
        let mut class_names = Vec::with_capacity(name_count);
        for _ in 0..name_count {
            class_names.push(lines.next_line()?.to_string());
        }

        let norm_len: usize = lines.field("normalization")?;
        let mut means = Vec::with_capacity(norm_len);
        let mut stds = Vec::with_capacity(norm_len);
        for _ in 0..norm_len {
            let line = lines.next_line()?;
            let mut parts = line.split_whitespace();
            means.push(parse_float::<F>(parts.next().unwrap_or(""))?);
            stds.push(parse_float::<F>(
                parts.next().ok_or_else(|| bad("normalization row needs two values"))?,
            )?);
        }

        let mut rules = Vec::with_capacity(rule_count);
        for r in 0..rule_count {
            let tag = lines.tagged("rule")?;
            if tag.trim() != r.to_string() {
                return Err(bad(format!("expected rule {r}, found {tag}")));
            }
            let mut state_terms = Vec::with_capacity(dims.state);
            for _ in 0..dims.state {
                state_terms.push(parse_term(&lines.tagged("state_term")?)?);
            }
            let mut input_terms = Vec::with_capacity(dims.input);
            for _ in 0..dims.input {
                input_terms.push(parse_term(&lines.tagged("input_term")?)?);
            }
            let a = parse_matrix(&mut lines, "a")?;
            let b = parse_matrix(&mut lines, "b")?;
            rules.push(Rule {
                antecedent: RuleAntecedent { state_terms, input_terms },
                consequent: RuleConsequent { a, b },
            });
        }
        let output_matrix = parse_matrix(&mut lines, "output_matrix")?;
        if lines.next_line()? != "end" {
            return Err(bad("missing end marker"));
        }

        let model = TnfsModel::new(dims, rules, output_matrix, initial_state)?;
        Ok(ModelArchive {
            model,
            normalization: Normalization { means, stds },
            class_names,
            seed,
            config_digest,
        })
    }
}

fn push_matrix<F: Scalar>(out: &mut String, tag: &str, m: &Matrix<F>) {
    out.push_str(&format!("{tag} {} {}\n", m.rows(), m.cols()));
    for r in 0..m.rows() {
        let cells: Vec<String> = m
            .row(r)
            .iter()
            .map(|v| fmt_float(v.to_f64().unwrap()))
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
}

fn bad(detail: impl Into<String>) -> TnfsError {
    TnfsError::Format {
        path: "<archive>".into(),
        detail: detail.into(),
    }
}

fn parse_float<F: Scalar>(token: &str) -> Result<F> {
    let v: f64 = token
        .parse()
        .map_err(|_| bad(format!("bad float {token:?}")))?;
    F::from_f64(v).ok_or_else(|| bad(format!("unrepresentable float {token:?}")))
}

fn parse_usizes(line: &str, expect: usize) -> Result<Vec<usize>> {
    let parts: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad integer {t:?}"))))
        .collect::<Result<_>>()?;
    if parts.len() != expect {
        return Err(bad(format!("expected {expect} integers in {line:?}")));
    }
    Ok(parts)
}

fn parse_term<F: Scalar>(line: &str) -> Result<GaussianTerm<F>> {
    let mut parts = line.split_whitespace();
    let center = parse_float(parts.next().unwrap_or(""))?;
    let width = parse_float(parts.next().ok_or_else(|| bad("term needs center and width"))?)?;
    Ok(GaussianTerm { center, width })
}

fn parse_matrix<F: Scalar>(lines: &mut Cursor<'_>, tag: &str) -> Result<Matrix<F>> {
    let head = lines.tagged(tag)?;
    let shape = parse_usizes(&head, 2)?;
    let (rows, cols) = (shape[0], shape[1]);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = lines.next_line()?;
        let mut count = 0;
        for token in line.split_whitespace() {
            data.push(parse_float::<F>(token)?);
            count += 1;
        }
        if count != cols {
            return Err(bad(format!("matrix {tag}: expected {cols} columns, found {count}")));
        }
    }
    Matrix::from_vec(rows, cols, data)
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { lines: text.lines() }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.lines
            .next()
            .map(str::trim_end)
            .ok_or_else(|| bad("unexpected end of archive"))
    }

    /// Next line must start with `tag`; returns the remainder.
    fn tagged(&mut self, tag: &str) -> Result<String> {
        let line = self.next_line()?;
        let rest = line
            .strip_prefix(tag)
            .ok_or_else(|| bad(format!("expected {tag:?}, found {line:?}")))?;
        Ok(rest.trim().to_string())
    }

    fn field<T: std::str::FromStr>(&mut self, tag: &str) -> Result<T> {
        let rest = self.tagged(tag)?;
        rest.parse()
            .map_err(|_| bad(format!("bad value {rest:?} for {tag}")))
    }

    fn float<F: Scalar>(&mut self) -> Result<F> {
        let line = self.next_line()?;
        parse_float(line.trim())
    }
}
