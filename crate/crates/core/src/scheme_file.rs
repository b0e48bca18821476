//! TOML scheme files with line-anchored errors.
//!
//! ```toml
//! name = "d2q9-advection"            # optional
//! dimension = 2
//! lambda = "1"
//! conserved = 1
//! velocities = [[0, 0], [1, 0], ...] # units of lambda
//! moment_matrix = [[1, 1, ...], ...]  # q rows of q rationals
//! equilibrium_jacobian = [["1/10"], ...] # q − conserved rows of `conserved` rationals
//! rates = ["6/5", ...]                # q − conserved rationals
//! equilibrium_offset = [0, ...]       # optional, default 0
//! base_state = [1]                    # optional, default 1
//! moment_names = ["ρ", "jx", ...]     # optional
//!
//! [parameters]                        # optional, informational
//! u = "1/10"
//! ```
//!
//! A rational is a TOML integer or a string `p`, `±p` or `±p/q`. With one
//! conserved moment the Jacobian may also be a flat list.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use num_traits::{One, Zero};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::number::{format_rational, int, parse_rational, Rational};
use crate::scheme::{builtin, LatticeScheme, BUILTIN_SCHEMES};

pub const BUILTIN_PREFIX: &str = "builtin:";

const KEYS: [&str; 13] = [
    "name",
    "dimension",
    "lambda",
    "conserved",
    "velocities",
    "moment_matrix",
    "equilibrium_jacobian",
    "equilibrium_offset",
    "rates",
    "base_state",
    "moment_names",
    "parameters",
    "description",
];

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, span: &Range<usize>, message: impl Into<String>) -> Error {
        Error::SchemeFile { line: self.line(span), message: message.into() }
    }

    fn rational(&self, v: &Spanned<DeValue<'_>>) -> Result<Rational> {
        let span = v.span();
        match v.get_ref() {
            DeValue::Integer(i) => {
                let digits = i.as_str().replace('_', "");
                let n = i64::from_str_radix(digits.trim_start_matches('+'), i.radix())
                    .map_err(|_| self.err(&span, format!("integer '{}' out of range", i.as_str())))?;
                Ok(int(n))
            }
            DeValue::String(s) => parse_rational(s).map_err(|e| self.err(&span, e.to_string())),
            other => Err(self.err(&span, format!("expected a rational, found {}", other.type_str()))),
        }
    }

    fn array<'v, 'i>(&self, v: &'v Spanned<DeValue<'i>>, what: &str) -> Result<&'v [Spanned<DeValue<'i>>]> {
        v.get_ref()
            .as_array()
            .map(|a| &a[..])
            .ok_or_else(|| self.err(&v.span(), format!("{what} must be an array")))
    }

    fn vector(&self, v: &Spanned<DeValue<'_>>, what: &str, len: Option<usize>) -> Result<Vec<Rational>> {
        let items = self.array(v, what)?;
        if let Some(n) = len {
            if items.len() != n {
                return Err(self.err(&v.span(), format!("{what} has {} entries, expected {n}", items.len())));
            }
        }
        items.iter().map(|x| self.rational(x)).collect()
    }

    fn matrix(&self, v: &Spanned<DeValue<'_>>, what: &str, rows: usize, cols: usize) -> Result<Matrix<Rational>> {
        let items = self.array(v, what)?;
        if items.len() != rows {
            return Err(self.err(&v.span(), format!("{what} has {} rows, expected {rows}", items.len())));
        }
        let rows = items
            .iter()
            .enumerate()
            .map(|(i, r)| self.vector(r, &format!("{what} row {i}"), Some(cols)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_rows(rows))
    }

    fn usize(&self, v: &Spanned<DeValue<'_>>, what: &str) -> Result<usize> {
        let r = self.rational(v)?;
        if !r.is_integer() || r < Rational::zero() {
            return Err(self.err(&v.span(), format!("{what} must be a non-negative integer")));
        }
        r.to_integer().try_into().map_err(|_| self.err(&v.span(), format!("{what} too large")))
    }

    fn string(&self, v: &Spanned<DeValue<'_>>, what: &str) -> Result<String> {
        v.get_ref()
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| self.err(&v.span(), format!("{what} must be a string")))
    }
}

pub fn parse_scheme(text: &str) -> Result<LatticeScheme> {
    let src = Source { text };
    let root = DeTable::parse(text).map_err(|e| {
        let line = e.span().map(|s| src.line(&s)).unwrap_or(1);
        Error::SchemeFile { line, message: e.message().to_string() }
    })?;
    let table = root.get_ref();
    let whole = root.span();
    for (key, _) in table.iter() {
        if !KEYS.contains(&key.get_ref().as_ref()) {
            return Err(src.err(&key.span(), format!("unknown key '{}'", key.get_ref())));
        }
    }
    let get = |key: &str| table.get(key);
    let require = |key: &str| get(key).ok_or_else(|| src.err(&whole, format!("missing required key '{key}'")));

    let dim = src.usize(require("dimension")?, "dimension")?;
    let lambda = src.rational(require("lambda")?)?;
    let velocities_v = require("velocities")?;
    let velocities = src
        .array(velocities_v, "velocities")?
        .iter()
        .enumerate()
        .map(|(j, v)| src.vector(v, &format!("velocity {j}"), Some(dim)))
        .collect::<Result<Vec<_>>>()?;
    let q = velocities.len();
    if q == 0 {
        return Err(src.err(&velocities_v.span(), "velocities must not be empty"));
    }
    let conserved_v = require("conserved")?;
    let n_c = src.usize(conserved_v, "conserved")?;
    if n_c == 0 || n_c > q {
        return Err(src.err(&conserved_v.span(), format!("conserved = {n_c} out of range 1..={q}")));
    }
    let n_y = q - n_c;
    let moment_matrix = src.matrix(require("moment_matrix")?, "moment_matrix", q, q)?;

    let jac_v = require("equilibrium_jacobian")?;
    let flat = n_c == 1 && src.array(jac_v, "equilibrium_jacobian")?.iter().all(|x| !x.get_ref().is_array());
    let equilibrium_jacobian = if flat {
        Matrix::from_rows(src.vector(jac_v, "equilibrium_jacobian", Some(n_y))?.into_iter().map(|x| vec![x]).collect())
    } else {
        src.matrix(jac_v, "equilibrium_jacobian", n_y, n_c)?
    };
    let rates = src.vector(require("rates")?, "rates", Some(n_y))?;
    let equilibrium_offset = match get("equilibrium_offset") {
        Some(v) => src.vector(v, "equilibrium_offset", Some(n_y))?,
        None => vec![Rational::zero(); n_y],
    };
    let base_state = match get("base_state") {
        Some(v) => src.vector(v, "base_state", Some(n_c))?,
        None => vec![Rational::one(); n_c],
    };
    let moment_names = match get("moment_names") {
        Some(v) => {
            let items = src.array(v, "moment_names")?;
            if items.len() != q {
                return Err(src.err(&v.span(), format!("moment_names has {} entries, expected {q}", items.len())));
            }
            items.iter().map(|x| src.string(x, "moment name")).collect::<Result<Vec<_>>>()?
        }
        None => (0..q).map(|k| if k == 0 { "ρ".to_string() } else { format!("m{k}") }).collect(),
    };
    let name = match get("name") {
        Some(v) => src.string(v, "name")?,
        None => "scheme".to_string(),
    };
    let mut parameters = BTreeMap::new();
    if let Some(v) = get("parameters") {
        let t = v
            .get_ref()
            .as_table()
            .ok_or_else(|| src.err(&v.span(), "parameters must be a table"))?;
        for (k, x) in t.iter() {
            parameters.insert(k.get_ref().to_string(), src.rational(x)?);
        }
    }

    let scheme = LatticeScheme {
        name,
        dim,
        lambda,
        velocities,
        moment_matrix,
        conserved: n_c,
        equilibrium_jacobian,
        equilibrium_offset,
        rates,
        base_state,
        parameters,
        moment_names,
    };
    let report = scheme.validate();
    if let Some(issue) = report.errors().next() {
        let key = issue_key(&issue.message);
        let span = key.and_then(get).map(|v| v.span()).unwrap_or(whole);
        return Err(src.err(&span, issue.message.clone()));
    }
    Ok(scheme)
}

/// File key a validation message refers to.
fn issue_key(message: &str) -> Option<&'static str> {
    const MAP: [(&str, &str); 7] = [
        ("moment matrix", "moment_matrix"),
        ("lambda", "lambda"),
        ("rate", "rates"),
        ("velocit", "velocities"),
        ("equilibrium_jacobian", "equilibrium_jacobian"),
        ("dimension", "dimension"),
        ("conserved", "conserved"),
    ];
    MAP.iter().find(|(needle, _)| message.contains(needle)).map(|(_, k)| *k)
}

pub fn load_scheme(path: &Path) -> Result<LatticeScheme> {
    parse_scheme(&std::fs::read_to_string(path)?)
}

/// `builtin:<name>` or a file path.
pub fn resolve_scheme(source: &str) -> Result<LatticeScheme> {
    match source.strip_prefix(BUILTIN_PREFIX) {
        Some(name) => builtin(name).ok_or_else(|| {
            let known: Vec<&str> = BUILTIN_SCHEMES.iter().map(|(n, _)| *n).collect();
            Error::Unsupported(format!("unknown built-in scheme '{name}' (known: {})", known.join(", ")))
        }),
        None => load_scheme(Path::new(source)),
    }
}

fn toml_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.to_string()
    } else {
        format!("\"{}\"", format_rational(r))
    }
}

fn toml_list(v: &[Rational]) -> String {
    format!("[{}]", v.iter().map(toml_rational).collect::<Vec<_>>().join(", "))
}

fn toml_rows(rows: &[Vec<Rational>]) -> String {
    let body: Vec<String> = rows.iter().map(|r| format!("  {},", toml_list(r))).collect();
    format!("[\n{}\n]", body.join("\n"))
}

/// Scheme file text that parses back to the same scheme.
pub fn to_toml(s: &LatticeScheme) -> String {
    let mut out = String::new();
    out.push_str(&format!("name = {:?}\n", s.name));
    out.push_str(&format!("dimension = {}\n", s.dim));
    out.push_str(&format!("lambda = \"{}\"\n", format_rational(&s.lambda)));
    out.push_str(&format!("conserved = {}\n", s.conserved));
    out.push_str(&format!("velocities = {}\n", toml_rows(&s.velocities)));
    out.push_str(&format!("moment_matrix = {}\n", toml_rows(&s.moment_matrix.to_rows())));
    out.push_str(&format!("equilibrium_jacobian = {}\n", toml_rows(&s.equilibrium_jacobian.to_rows())));
    out.push_str(&format!("equilibrium_offset = {}\n", toml_list(&s.equilibrium_offset)));
    out.push_str(&format!("rates = {}\n", toml_list(&s.rates)));
    out.push_str(&format!("base_state = {}\n", toml_list(&s.base_state)));
    let names: Vec<String> = s.moment_names.iter().map(|n| format!("{n:?}")).collect();
    out.push_str(&format!("moment_names = [{}]\n", names.join(", ")));
    if !s.parameters.is_empty() {
        out.push_str("\n[parameters]\n");
        for (k, v) in &s.parameters {
            out.push_str(&format!("{k} = {}\n", toml_rational(v)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::number::rat;

    const D1Q3: &str = r#"
name = "d1q3"
dimension = 1
lambda = "1"
conserved = 1
velocities = [[0], [1], [-1]]
moment_matrix = [[1, 1, 1], [0, 1, -1], [0, 1, 1]]
equilibrium_jacobian = ["1/5", "1/2"]
rates = ["7/5", "6/5"]

[parameters]
u = "1/5"
"#;

    fn line_of(err: Error) -> usize {
        match err {
            Error::SchemeFile { line, .. } => line,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parses_minimal_file() {
        let s = parse_scheme(D1Q3).unwrap();
        assert_eq!(s.q(), 3);
        assert_eq!(s.equilibrium_jacobian[(0, 0)], rat(1, 5));
        assert_eq!(s.base_state, vec![int(1)]);
        assert_eq!(s.parameters["u"], rat(1, 5));
    }

    #[test]
    fn builtins_round_trip() {
        for (name, _) in BUILTIN_SCHEMES {
            let s = builtin(name).unwrap();
            assert_eq!(parse_scheme(&to_toml(&s)).unwrap(), s, "{name}");
        }
    }

    #[test]
    fn bad_rational_points_at_its_line() {
        let text = D1Q3.replace("rates = [\"7/5\", \"6/5\"]", "rates = [\"7/5\",\n \"6/0\"]");
        assert_eq!(line_of(parse_scheme(&text).unwrap_err()), 10);
        let text = D1Q3.replace("\"1/2\"", "0.5");
        assert_eq!(line_of(parse_scheme(&text).unwrap_err()), 8);
    }

    #[test]
    fn syntax_error_has_line() {
        let text = D1Q3.replace("conserved = 1", "conserved = = 1");
        assert_eq!(line_of(parse_scheme(&text).unwrap_err()), 5);
    }

    #[test]
    fn shape_errors() {
        let text = D1Q3.replace("[0, 1, 1]]", "[0, 1]]");
        assert_eq!(line_of(parse_scheme(&text).unwrap_err()), 7);
        let text = D1Q3.replace("rates = [\"7/5\", \"6/5\"]", "rates = [\"7/5\"]");
        assert_eq!(line_of(parse_scheme(&text).unwrap_err()), 9);
    }

    #[test]
    fn validation_errors_are_anchored() {
        let text = D1Q3.replace("[0, 1, 1]]", "[0, 1, -1]]");
        let err = parse_scheme(&text).unwrap_err();
        assert!(err.to_string().contains("singular"), "{err}");
        assert_eq!(line_of(err), 7);
    }

    #[test]
    fn unknown_and_missing_keys() {
        assert_eq!(line_of(parse_scheme(&format!("colour = 1\n{D1Q3}")).unwrap_err()), 1);
        let err = parse_scheme(&D1Q3.replace("lambda = \"1\"\n", "")).unwrap_err();
        assert!(err.to_string().contains("lambda"));
    }

    #[test]
    fn resolve_builtin_alias() {
        assert_eq!(resolve_scheme("builtin:d2q9-advection").unwrap(), builtin("d2q9-advection").unwrap());
        assert!(resolve_scheme("builtin:nope").is_err());
    }
}
