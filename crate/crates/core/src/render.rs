//! Text, LaTeX and JSON rendering of equivalent equations.

use num_traits::{One, Signed};

use crate::diffop::{DiffPoly, MultiIndex, DEFAULT_DEGREE_CAP};
use crate::expansion::EquivalentPDE;
use crate::number::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Latex,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "latex" => Ok(Self::Latex),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format '{other}' (expected text, latex or json)")),
        }
    }
}

pub fn render(pde: &EquivalentPDE, format: Format) -> String {
    match format {
        Format::Text => render_text(pde),
        Format::Latex => render_latex(pde),
        Format::Json => serde_json::to_string_pretty(pde).expect("PDE serializes"),
    }
}

/// One printable piece of the left-hand side: `sign · Δt^k · |coef| · op W`.
struct Item {
    negative: bool,
    dt_order: u32,
    magnitude: Rational,
    op: Op,
    source: usize,
}

enum Op {
    Monomial(MultiIndex),
    Laplacian(u32),
}

/// Left-hand-side items of one equation, `∂t W + Σ Δt^k L_k W`, where
/// `L_k = −(right-hand side)`. An operator equal to `c Δ^m` collapses.
fn items(pde: &EquivalentPDE, field: usize) -> Vec<Item> {
    let mut out = Vec::new();
    for dt_order in 0..pde.order as u32 {
        for source in 0..pde.fields.len() {
            let lhs = -pde.operator(dt_order, field, source);
            if lhs.is_zero() {
                continue;
            }
            if let Some((m, c)) = laplacian_power(&lhs) {
                out.push(Item { negative: c.is_negative(), dt_order, magnitude: c.abs(), op: Op::Laplacian(m), source });
                continue;
            }
            for (beta, c) in lhs.terms() {
                out.push(Item {
                    negative: c.is_negative(),
                    dt_order,
                    magnitude: c.abs(),
                    op: Op::Monomial(beta.clone()),
                    source,
                });
            }
        }
    }
    out
}

/// `Some((m, c))` when `p = c Δ^m` with `m ≥ 1` in two or more dimensions.
fn laplacian_power(p: &DiffPoly) -> Option<(u32, Rational)> {
    let d = p.dim();
    if d < 2 {
        return None;
    }
    let deg = p.degree()?;
    if deg == 0 || deg % 2 == 1 || !p.is_homogeneous(deg) {
        return None;
    }
    let m = deg / 2;
    let lap = DiffPoly::laplacian(d, DEFAULT_DEGREE_CAP.max(deg)).pow(m);
    let lead = MultiIndex::new({
        let mut e = vec![0u8; d];
        e[0] = deg as u8;
        e
    });
    let c = p.coeff(&lead);
    (lap.scale(&c) == *p).then_some((m, c))
}

fn axis_name(d: usize, axis: usize) -> String {
    if d <= 3 {
        ["x", "y", "z"][axis].to_string()
    } else {
        format!("x{}", axis + 1)
    }
}

fn superscript(n: u32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string().chars().map(|c| DIGITS[c.to_digit(10).unwrap() as usize]).collect()
}

fn text_power(base: &str, n: u32) -> String {
    if n == 1 {
        base.to_string()
    } else {
        format!("{base}{}", superscript(n))
    }
}

fn text_coef(c: &Rational) -> String {
    if c.is_one() {
        String::new()
    } else if c.is_integer() {
        c.to_string()
    } else {
        format!("({c})")
    }
}

pub fn render_text(pde: &EquivalentPDE) -> String {
    let mut lines = Vec::new();
    for (field, eq) in pde.equations.iter().enumerate() {
        let mut line = format!("∂t {}", eq.name);
        for item in items(pde, field) {
            line.push_str(if item.negative { " − " } else { " + " });
            if item.dt_order > 0 {
                line.push_str(&text_power("Δt", item.dt_order));
                line.push('·');
            }
            line.push_str(&text_coef(&item.magnitude));
            let name = &pde.fields[item.source];
            match &item.op {
                Op::Laplacian(m) => {
                    line.push_str(&text_power("Δ", *m));
                    line.push_str(name);
                }
                Op::Monomial(beta) => {
                    for (axis, &e) in beta.exponents().iter().enumerate() {
                        if e > 0 {
                            line.push_str(&text_power(&format!("∂{}", axis_name(pde.dim, axis)), e as u32));
                        }
                    }
                    line.push(' ');
                    line.push_str(name);
                }
            }
        }
        line.push_str(" = O(");
        line.push_str(&text_power("Δt", pde.order as u32));
        line.push(')');
        lines.push(line);
    }
    lines.join("\n")
}

fn latex_name(name: &str) -> String {
    match name {
        "ρ" => r"\rho".into(),
        "ε" => r"\varepsilon".into(),
        "φ" => r"\varphi".into(),
        "u" | "v" | "w" => name.into(),
        n if n.chars().count() == 1 && n.is_ascii() => n.into(),
        n => format!(r"\mathrm{{{n}}}"),
    }
}

fn latex_power(base: &str, n: u32) -> String {
    if n == 1 {
        base.to_string()
    } else {
        format!("{base}^{{{n}}}")
    }
}

fn latex_coef(c: &Rational) -> String {
    if c.is_one() {
        String::new()
    } else if c.is_integer() {
        format!("{c} ")
    } else {
        format!(r"\frac{{{}}}{{{}}} ", c.numer(), c.denom())
    }
}

pub fn render_latex(pde: &EquivalentPDE) -> String {
    let mut lines = Vec::new();
    for (field, eq) in pde.equations.iter().enumerate() {
        let mut line = format!(r"\partial_t {}", latex_name(&eq.name));
        for item in items(pde, field) {
            line.push_str(if item.negative { " - " } else { " + " });
            if item.dt_order > 0 {
                line.push_str(&latex_power(r"\Delta t", item.dt_order));
                line.push_str(r" \, ");
            }
            line.push_str(&latex_coef(&item.magnitude));
            let name = latex_name(&pde.fields[item.source]);
            match &item.op {
                Op::Laplacian(m) => line.push_str(&latex_power(r"\Delta", *m)),
                Op::Monomial(beta) => {
                    let parts: Vec<String> = beta
                        .exponents()
                        .iter()
                        .enumerate()
                        .filter(|(_, &e)| e > 0)
                        .map(|(axis, &e)| latex_power(&format!(r"\partial_{{{}}}", axis_name(pde.dim, axis)), e as u32))
                        .collect();
                    line.push_str(&parts.join(" "));
                }
            }
            line.push(' ');
            line.push_str(&name);
        }
        line.push_str(&format!(r" = O({})", latex_power(r"\Delta t", pde.order as u32)));
        lines.push(line);
    }
    lines.join(" \\\\\n")
}
