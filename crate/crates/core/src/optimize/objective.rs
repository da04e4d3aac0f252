//! Objectives over the ADC matrix and the mini-language that builds them.
//!
//! ```text
//! objective := ['+'|'-'] term (('+'|'-') term)*
//! term      := [number ['*']] atom
//! atom      := k11 | k22 | k33 | k12 | k13 | k23 | aac | isogap | target(FILE)
//! ```

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    LinearCombo,
    IsoGap,
    TargetMatrix,
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTerm {
    pub weight: f64,
    pub matrix: Matrix3<f64>,
}

/// `Σ c_ij k_ij + c_aac·AAC + w_iso·(λmax - λmin) + w_t·‖k_A - k*‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    /// Coefficient of `k_A^{ij}`; only the upper triangle is used.
    pub linear: Matrix3<f64>,
    pub aac: f64,
    pub iso_gap: f64,
    pub target: Option<TargetTerm>,
    pub sense: Sense,
}

/// Conditions met while differentiating, reported in the iteration log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientFlags {
    /// Extreme eigenvalues were repeated; a subgradient was used.
    pub degenerate_eigenvalues: bool,
    /// `k_A` equals the target; the gradient was set to zero.
    pub target_reached: bool,
}

impl GradientFlags {
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.degenerate_eigenvalues {
            out.push("degenerate-eigenvalues".to_string());
        }
        if self.target_reached {
            out.push("target-reached".to_string());
        }
        out
    }
}

const FEASIBILITY_TOL: f64 = 1e-9;
const DEGENERACY_TOL: f64 = 1e-10;

impl ObjectiveSpec {
    fn empty() -> Self {
        Self { linear: Matrix3::zeros(), aac: 0.0, iso_gap: 0.0, target: None, sense: Sense::Maximize }
    }

    pub fn aac() -> Self {
        Self { aac: 1.0, ..Self::empty() }
    }

    pub fn entry(i: usize, j: usize) -> Self {
        let mut s = Self::empty();
        s.linear[(i.min(j), i.max(j))] = 1.0;
        s
    }

    pub fn iso_gap() -> Self {
        Self { iso_gap: 1.0, ..Self::empty() }
    }

    pub fn target(matrix: Matrix3<f64>) -> Result<Self> {
        check_target(&matrix)?;
        Ok(Self { target: Some(TargetTerm { weight: 1.0, matrix }), sense: Sense::Minimize, ..Self::empty() })
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn kind(&self) -> ObjectiveKind {
        let linear = self.linear.iter().any(|&c| c != 0.0) || self.aac != 0.0;
        let parts = [linear, self.iso_gap != 0.0, self.target.is_some()];
        match parts {
            [_, false, false] => ObjectiveKind::LinearCombo,
            [false, true, false] => ObjectiveKind::IsoGap,
            [false, false, true] => ObjectiveKind::TargetMatrix,
            _ => ObjectiveKind::Composite,
        }
    }

    /// Parses the objective mini-language, reading `target(FILE)` matrices
    /// from disk relative to the working directory.
    ///
    /// An objective made only of positively weighted target terms is
    /// minimized; everything else is maximized.
    pub fn parse(src: &str) -> Result<Self> {
        Self::parse_with(src, |path| load_target(Path::new(path)))
    }

    pub fn parse_with(src: &str, load: impl Fn(&str) -> Result<Matrix3<f64>>) -> Result<Self> {
        let terms = Parser { src, pos: 0 }.objective()?;
        let mut spec = Self::empty();
        for (weight, atom) in terms {
            match atom {
                Atom::Entry(i, j) => spec.linear[(i, j)] += weight,
                Atom::Aac => spec.aac += weight,
                Atom::IsoGap => spec.iso_gap += weight,
                Atom::Target(path) => {
                    if spec.target.is_some() {
                        return Err(Error::invalid("objective may contain at most one target(...) term"));
                    }
                    let matrix = load(&path)?;
                    check_target(&matrix)?;
                    spec.target = Some(TargetTerm { weight, matrix });
                }
            }
        }
        if spec.kind() == ObjectiveKind::TargetMatrix && spec.target.as_ref().is_some_and(|t| t.weight > 0.0) {
            spec.sense = Sense::Minimize;
        }
        Ok(spec)
    }

    pub fn value(&self, ka: &Matrix3<f64>) -> f64 {
        let mut f = 0.0;
        for i in 0..3 {
            for j in i..3 {
                f += self.linear[(i, j)] * ka[(i, j)];
            }
        }
        f += self.aac * ka.trace() / 3.0;
        if self.iso_gap != 0.0 {
            let eig = ka.symmetric_eigenvalues();
            f += self.iso_gap * (eig.max() - eig.min());
        }
        if let Some(t) = &self.target {
            f += t.weight * (ka - t.matrix).norm();
        }
        f
    }

    /// `∂f/∂k_A` as a matrix `D` with `ḟ = Σ_ij D_ij k̇_ij`.
    pub fn derivative(&self, ka: &Matrix3<f64>) -> (Matrix3<f64>, GradientFlags) {
        let mut flags = GradientFlags::default();
        let mut d = Matrix3::zeros();
        for i in 0..3 {
            for j in i..3 {
                d[(i, j)] += self.linear[(i, j)];
            }
        }
        d += Matrix3::identity() * (self.aac / 3.0);
        if self.iso_gap != 0.0 {
            let (pmax, pmin, degenerate) = extreme_eigenvectors(ka);
            flags.degenerate_eigenvalues = degenerate;
            d += self.iso_gap * (pmax * pmax.transpose() - pmin * pmin.transpose());
        }
        if let Some(t) = &self.target {
            let diff = ka - t.matrix;
            let dist = diff.norm();
            if dist > 0.0 {
                d += t.weight * diff / dist;
            } else {
                flags.target_reached = true;
            }
        }
        (d, flags)
    }
}

/// Unit eigenvectors for the largest and smallest eigenvalues of a symmetric
/// matrix, and whether either extreme eigenvalue is repeated. Ties are broken
/// by the eigensolver's output order.
pub fn extreme_eigenvectors(a: &Matrix3<f64>) -> (nalgebra::Vector3<f64>, nalgebra::Vector3<f64>, bool) {
    let eig = SymmetricEigen::new(*a);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = order.map(|k| eig.eigenvalues[k]);
    let scale = vals.iter().map(|v| v.abs()).fold(1e-300, f64::max);
    let degenerate = (vals[2] - vals[1]) <= DEGENERACY_TOL * scale || (vals[1] - vals[0]) <= DEGENERACY_TOL * scale;
    let col = |k: usize| eig.eigenvectors.column(k).into_owned();
    (col(order[2]), col(order[0]), degenerate)
}

fn check_target(m: &Matrix3<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("target matrix has non-finite entries"));
    }
    if (m - m.transpose()).norm() > FEASIBILITY_TOL * (1.0 + m.norm()) {
        return Err(Error::invalid("target matrix must be symmetric"));
    }
    let eig = m.symmetric_eigenvalues();
    let tol = FEASIBILITY_TOL;
    if eig.iter().any(|&l| l < -tol || l > 1.0 + tol) || eig.sum() > 2.0 + tol {
        return Err(Error::invalid(format!(
            "target eigenvalues {:?} leave the feasible region 0 <= k_i <= 1, sum <= 2",
            eig.as_slice()
        )));
    }
    Ok(())
}

/// Reads a target matrix: either a bare `[[..],[..],[..]]` array or an object
/// with a `target` (or `ka`) field holding one.
pub fn load_target(path: &Path) -> Result<Matrix3<f64>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let rows = match &value {
        serde_json::Value::Object(map) => map.get("target").or_else(|| map.get("ka")).cloned(),
        other => Some(other.clone()),
    }
    .ok_or_else(|| Error::invalid(format!("{}: expected a 3x3 array or a 'target' field", path.display())))?;
    let rows: [[f64; 3]; 3] = serde_json::from_value(rows)?;
    Ok(Matrix3::from_fn(|i, j| rows[i][j]))
}

/// Every diagonal `diag(m1, m2, m3)·Δκ` with non-negative integers `m_i`,
/// not all zero, inside the feasible region.
pub fn sample_targets(step: f64) -> Result<Vec<Matrix3<f64>>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("target step must be positive"));
    }
    let top = (1.0 / step + FEASIBILITY_TOL).floor() as usize;
    let mut out = Vec::new();
    for a in 0..=top {
        for b in 0..=top {
            for c in 0..=top {
                if a + b + c == 0 || (a + b + c) as f64 * step > 2.0 + FEASIBILITY_TOL {
                    continue;
                }
                out.push(Matrix3::from_diagonal(&nalgebra::Vector3::new(a as f64, b as f64, c as f64)) * step);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Atom {
    Entry(usize, usize),
    Aac,
    IsoGap,
    Target(String),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn error(&self, what: &str) -> Error {
        Error::invalid(format!(
            "objective {:?}: {what} at column {}; expected a signed sum of [number*] k11|k22|k33|k12|k13|k23|aac|isogap|target(FILE)",
            self.src,
            self.pos + 1
        ))
    }

    fn objective(mut self) -> Result<Vec<(f64, Atom)>> {
        let mut terms = Vec::new();
        self.skip_ws();
        let mut sign = self.sign().unwrap_or(1.0);
        loop {
            terms.push(self.term(sign)?);
            self.skip_ws();
            if self.rest().is_empty() {
                return Ok(terms);
            }
            sign = self.sign().ok_or_else(|| self.error("expected '+' or '-'"))?;
        }
    }

    fn sign(&mut self) -> Option<f64> {
        self.skip_ws();
        let s = match self.rest().chars().next() {
            Some('+') => 1.0,
            Some('-') => -1.0,
            _ => return None,
        };
        self.pos += 1;
        Some(s)
    }

    fn term(&mut self, sign: f64) -> Result<(f64, Atom)> {
        self.skip_ws();
        let mut weight = sign;
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E'))
            .unwrap_or(self.rest().len());
        // A leading number must start with a digit or '.', so `e`-words are atoms.
        if len > 0 && self.rest().starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            let text = &self.rest()[..len];
            let value: f64 = text.parse().map_err(|_| self.error(&format!("bad number {text:?}")))?;
            weight *= value;
            self.pos += len;
            self.skip_ws();
            if self.rest().starts_with('*') {
                self.pos += 1;
                self.skip_ws();
            }
        }
        let len = self.rest().find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(self.rest().len());
        let word = &self.rest()[..len];
        let atom = match word {
            "k11" => Atom::Entry(0, 0),
            "k22" => Atom::Entry(1, 1),
            "k33" => Atom::Entry(2, 2),
            "k12" | "k21" => Atom::Entry(0, 1),
            "k13" | "k31" => Atom::Entry(0, 2),
            "k23" | "k32" => Atom::Entry(1, 2),
            "aac" => Atom::Aac,
            "isogap" => Atom::IsoGap,
            "target" => {
                self.pos += len;
                self.skip_ws();
                if !self.rest().starts_with('(') {
                    return Err(self.error("expected '(' after target"));
                }
                let close = self.rest().find(')').ok_or_else(|| self.error("unclosed target("))?;
                let path = self.rest()[1..close].trim().to_string();
                if path.is_empty() {
                    return Err(self.error("empty target path"));
                }
                self.pos += close + 1;
                return Ok((weight, Atom::Target(path)));
            }
            "" => return Err(self.error("missing term")),
            other => return Err(self.error(&format!("unknown token {other:?}"))),
        };
        self.pos += len;
        Ok((weight, atom))
    }
}
