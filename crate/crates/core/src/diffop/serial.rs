//! JSON form: `{ "dim": d, "terms": [{"beta": [..], "coef": "p/q"}] }`, terms
//! in graded-lex order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::number::{format_rational, parse_rational};

use super::poly::{MultiIndex, DEFAULT_DEGREE_CAP};
use super::{DiffPoly, OpMatrix};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermJson {
    pub beta: Vec<u8>,
    pub coef: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffPolyJson {
    pub dim: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpMatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub entries: Vec<Vec<DiffPolyJson>>,
}

impl From<&DiffPoly> for DiffPolyJson {
    fn from(p: &DiffPoly) -> Self {
        Self {
            dim: p.dim(),
            terms: p
                .terms()
                .map(|(b, c)| TermJson { beta: b.exponents().to_vec(), coef: format_rational(c) })
                .collect(),
        }
    }
}

impl DiffPolyJson {
    pub fn into_poly(self, cap: u32) -> Result<DiffPoly> {
        let mut p = DiffPoly::zero(self.dim, cap);
        for t in self.terms {
            if t.beta.len() != self.dim {
                return Err(Error::Dimension(format!(
                    "term {:?} has {} exponents, expected {}",
                    t.beta,
                    t.beta.len(),
                    self.dim
                )));
            }
            p.add_term(MultiIndex::new(t.beta), parse_rational(&t.coef)?);
        }
        Ok(p)
    }
}

impl TryFrom<DiffPolyJson> for DiffPoly {
    type Error = Error;

    fn try_from(j: DiffPolyJson) -> Result<Self> {
        j.into_poly(DEFAULT_DEGREE_CAP)
    }
}

impl From<&OpMatrix> for OpMatrixJson {
    fn from(m: &OpMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            dim: m.dim(),
            entries: (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| DiffPolyJson::from(m.get(i, j))).collect())
                .collect(),
        }
    }
}

impl TryFrom<OpMatrixJson> for OpMatrix {
    type Error = Error;

    fn try_from(j: OpMatrixJson) -> Result<Self> {
        if j.entries.len() != j.rows || j.entries.iter().any(|r| r.len() != j.cols) {
            return Err(Error::Dimension(format!("entries do not form a {}x{} matrix", j.rows, j.cols)));
        }
        let mut out = OpMatrix::zeros(j.rows, j.cols, j.dim, DEFAULT_DEGREE_CAP);
        for (i, row) in j.entries.into_iter().enumerate() {
            for (k, entry) in row.into_iter().enumerate() {
                if entry.dim != j.dim {
                    return Err(Error::Dimension(format!("entry ({i},{k}) has dim {}", entry.dim)));
                }
                out.set(i, k, entry.try_into()?);
            }
        }
        Ok(out)
    }
}
