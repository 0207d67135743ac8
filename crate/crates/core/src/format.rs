//! The `floerkit-complex 1` text format.
//!
//! ```text
//! floerkit-complex 1
//! field f2                 # f2 | fp <p> | q
//! mode interval            # omega0 | omega1 | interval
//! cutoff 6
//! periods 2
//! omega0 1 2
//! omega1 2 1
//! generators 2
//! gen x 0 1 0              # name degree action0 slope
//! gen y 1 3 0
//! boundary 0               # one block per sampled s
//! entry x y 1[0,0] 1[1,0]  # row column terms, each coefficient[exponent]
//! end
//! continuation 0 1/2       # optional, from s to t
//! shifts 0 0
//! phi
//! end
//! psi
//! end
//! ks
//! end
//! kt
//! end
//! end
//! end
//! ```
//!
//! `#` starts a comment. Rationals are written `p/q` or as integers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::complex::{
    BoundaryFamily, CappedGenerator, Chain, ComplexData, ContinuationBlock, ContinuationData,
    Matrix,
};
use crate::error::{Error, Result};
use crate::exponents::{Exponent, PeriodSystem};
use crate::field::Field;
use crate::novikov::{NovikovElement, Ring, RingMode};
use crate::rational::{format_rational, parse_rational, Rational};

pub const HEADER: &str = "floerkit-complex 1";

/// Command-line replacements for the file's field and cutoff.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub field: Option<Field>,
    pub cutoff: Option<Rational>,
}

#[derive(Clone, Copy, Debug)]
struct Token<'a> {
    line: usize,
    column: usize,
    text: &'a str,
}

struct Lines<'a> {
    lines: Vec<(usize, Vec<Token<'a>>)>,
    pos: usize,
    last_line: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn at(tok: &Token<'_>, message: impl Into<String>) -> Error {
    err(tok.line, tok.column, message)
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        let mut lines = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            last_line = i + 1;
            let body = raw.split('#').next().unwrap_or("");
            let mut toks = Vec::new();
            let mut start = None;
            for (j, ch) in body
                .char_indices()
                .chain(std::iter::once((body.len(), ' ')))
            {
                match (ch.is_whitespace(), start) {
                    (false, None) => start = Some(j),
                    (true, Some(s)) => {
                        toks.push(Token {
                            line: i + 1,
                            column: body[..s].chars().count() + 1,
                            text: &body[s..j],
                        });
                        start = None;
                    }
                    _ => {}
                }
            }
            if !toks.is_empty() {
                lines.push((i + 1, toks));
            }
        }
        Lines {
            lines,
            pos: 0,
            last_line,
        }
    }

    fn peek(&self) -> Option<&[Token<'a>]> {
        self.lines.get(self.pos).map(|(_, t)| t.as_slice())
    }

    fn next(&mut self, expecting: &str) -> Result<Vec<Token<'a>>> {
        match self.lines.get(self.pos) {
            Some((_, t)) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(err(
                self.last_line + 1,
                1,
                format!("unexpected end of input, expected {expecting}"),
            )),
        }
    }

    /// The next line, which must start with `key` and have exactly `arity` further tokens
    /// (any number when `arity` is `None`).
    fn keyed(&mut self, key: &str, arity: Option<usize>) -> Result<Vec<Token<'a>>> {
        let toks = self.next(&format!("`{key}`"))?;
        if toks[0].text != key {
            return Err(at(
                &toks[0],
                format!("expected `{key}`, found `{}`", toks[0].text),
            ));
        }
        if let Some(n) = arity {
            if toks.len() != n + 1 {
                let tok = toks.get(n + 1).unwrap_or(toks.last().expect("nonempty"));
                return Err(at(
                    tok,
                    format!("`{key}` takes {n} argument(s), found {}", toks.len() - 1),
                ));
            }
        }
        Ok(toks[1..].to_vec())
    }
}

fn rational(tok: &Token<'_>) -> Result<Rational> {
    parse_rational(tok.text).map_err(|m| at(tok, m))
}

fn integer<T: std::str::FromStr>(tok: &Token<'_>) -> Result<T> {
    tok.text
        .parse()
        .map_err(|_| at(tok, format!("expected an integer, found `{}`", tok.text)))
}

fn parse_field(toks: &[Token<'_>], key: &Token<'_>) -> Result<Field> {
    match toks {
        [t] if t.text == "f2" => Ok(Field::Prime(2)),
        [t] if t.text == "q" => Ok(Field::Rationals),
        [t, p] if t.text == "fp" => Field::prime(integer(p)?).map_err(|e| at(p, e.to_string())),
        [t, ..] => Err(at(t, format!("unknown field `{}`", t.text))),
        [] => Err(at(key, "missing field name")),
    }
}

/// Parses `f2`, `q` or `fp:<p>`/`fp <p>` as given on a command line.
pub fn parse_field_name(s: &str) -> Result<Field> {
    match s {
        "f2" => Ok(Field::Prime(2)),
        "q" => Ok(Field::Rationals),
        _ => match s
            .strip_prefix("fp")
            .map(|r| r.trim_start_matches([':', ' ']))
        {
            Some(p) => Field::prime(
                p.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad prime `{p}`")))?,
            ),
            None => Err(Error::InvalidArgument(format!("unknown field `{s}`"))),
        },
    }
}

fn parse_mode(tok: &Token<'_>) -> Result<RingMode> {
    match tok.text {
        "omega0" => Ok(RingMode::Omega0),
        "omega1" => Ok(RingMode::Omega1),
        "interval" => Ok(RingMode::Interval),
        other => Err(at(tok, format!("unknown mode `{other}`"))),
    }
}

/// One term `c[a1,...,ak]`.
fn parse_term(tok: &Token<'_>, rank: usize) -> Result<(Exponent, Rational)> {
    let open = tok
        .text
        .find('[')
        .ok_or_else(|| at(tok, "term must look like coefficient[exponent]"))?;
    if !tok.text.ends_with(']') {
        return Err(at(tok, "term must end with `]`"));
    }
    let coef = parse_rational(&tok.text[..open]).map_err(|m| at(tok, m))?;
    let inner = &tok.text[open + 1..tok.text.len() - 1];
    let coords: Vec<i64> = if inner.is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|c| {
                c.parse()
                    .map_err(|_| at(tok, format!("bad exponent coordinate `{c}`")))
            })
            .collect::<Result<_>>()?
    };
    if coords.len() != rank {
        return Err(at(
            tok,
            format!(
                "exponent has {} coordinates, lattice rank is {rank}",
                coords.len()
            ),
        ));
    }
    Ok((Exponent(coords), coef))
}

/// `entry` lines up to `end`.
fn parse_matrix(
    lines: &mut Lines<'_>,
    ring: &Arc<Ring>,
    names: &BTreeMap<String, usize>,
) -> Result<Matrix> {
    let n = names.len();
    let mut m = Matrix::zero(ring, n, n);
    loop {
        let toks = lines.next("`entry` or `end`")?;
        match toks[0].text {
            "end" if toks.len() == 1 => return Ok(m),
            "end" => return Err(at(&toks[1], "`end` takes no arguments")),
            "entry" => {
                if toks.len() < 4 {
                    return Err(at(
                        &toks[0],
                        "`entry` needs a row, a column and at least one term",
                    ));
                }
                let index = |t: &Token<'_>| {
                    names
                        .get(t.text)
                        .copied()
                        .ok_or_else(|| at(t, format!("unknown generator `{}`", t.text)))
                };
                let (r, c) = (index(&toks[1])?, index(&toks[2])?);
                if m.get(r, c).is_some() {
                    return Err(at(
                        &toks[0],
                        format!("duplicate entry ({}, {})", toks[1].text, toks[2].text),
                    ));
                }
                let terms = toks[3..]
                    .iter()
                    .map(|t| parse_term(t, ring.rank()))
                    .collect::<Result<Vec<_>>>()?;
                let x = NovikovElement::from_terms(ring, terms)
                    .map_err(|e| at(&toks[3], e.to_string()))?;
                m.set(r, c, x).map_err(|e| at(&toks[0], e.to_string()))?;
            }
            other => {
                return Err(at(
                    &toks[0],
                    format!("expected `entry` or `end`, found `{other}`"),
                ))
            }
        }
    }
}

pub fn parse_complex(text: &str) -> Result<ComplexData> {
    parse_complex_with(text, &Overrides::default())
}

pub fn parse_complex_with(text: &str, overrides: &Overrides) -> Result<ComplexData> {
    let mut lines = Lines::new(text);
    let head = lines.next("the header")?;
    let joined: Vec<&str> = head.iter().map(|t| t.text).collect();
    if joined.join(" ") != HEADER {
        return Err(at(&head[0], format!("expected header `{HEADER}`")));
    }
    let mut field = Field::default();
    let mut mode = RingMode::Interval;
    let mut cutoff = None;
    while let Some(toks) = lines.peek() {
        match toks[0].text {
            "field" => {
                let t = lines.next("field")?;
                field = parse_field(&t[1..], &t[0])?;
            }
            "mode" => {
                let t = lines.keyed("mode", Some(1))?;
                mode = parse_mode(&t[0])?;
            }
            "cutoff" => {
                let t = lines.keyed("cutoff", Some(1))?;
                let c = rational(&t[0])?;
                if c <= Rational::from_integer(0.into()) {
                    return Err(at(&t[0], "cutoff must be positive"));
                }
                cutoff = Some(c);
            }
            _ => break,
        }
    }
    let field = overrides.field.unwrap_or(field);
    let cutoff = match (&overrides.cutoff, cutoff) {
        (Some(c), _) => c.clone(),
        (None, Some(c)) => c,
        (None, None) => {
            let line = lines.peek().map_or(lines.last_line + 1, |t| t[0].line);
            return Err(err(line, 1, "missing `cutoff`"));
        }
    };
    let k_tok = lines.keyed("periods", Some(1))?;
    let k: usize = integer(&k_tok[0])?;
    let w0 = lines
        .keyed("omega0", Some(k))?
        .iter()
        .map(rational)
        .collect::<Result<Vec<_>>>()?;
    let w1 = lines
        .keyed("omega1", Some(k))?
        .iter()
        .map(rational)
        .collect::<Result<Vec<_>>>()?;
    let system = PeriodSystem::new(w0, w1)?;
    let ring = Ring::new(system, field, mode, cutoff)?;

    let n: usize = integer(&lines.keyed("generators", Some(1))?[0])?;
    let mut gens = Vec::with_capacity(n);
    let mut names = BTreeMap::new();
    for i in 0..n {
        let t = lines.keyed("gen", Some(4))?;
        if names.insert(t[0].text.to_string(), i).is_some() {
            return Err(at(
                &t[0],
                format!("duplicate generator name `{}`", t[0].text),
            ));
        }
        gens.push(CappedGenerator::new(
            t[0].text,
            integer(&t[1])?,
            rational(&t[2])?,
            rational(&t[3])?,
        ));
    }

    let mut fam = BoundaryFamily::new();
    let mut blocks = Vec::new();
    loop {
        let toks = lines.next("`boundary`, `continuation` or `end`")?;
        match toks[0].text {
            "boundary" => {
                if toks.len() != 2 {
                    return Err(at(&toks[0], "`boundary` takes one argument"));
                }
                let s = rational(&toks[1])?;
                if fam.samples().contains_key(&s) {
                    return Err(at(&toks[1], "duplicate boundary sample"));
                }
                let m = parse_matrix(&mut lines, &ring, &names)?;
                fam.insert(s, m).map_err(|e| at(&toks[1], e.to_string()))?;
            }
            "continuation" => {
                if toks.len() != 3 {
                    return Err(at(&toks[0], "`continuation` takes two arguments"));
                }
                let (s, t) = (rational(&toks[1])?, rational(&toks[2])?);
                let sh = lines.keyed("shifts", Some(2))?;
                let shift_bounds = (rational(&sh[0])?, rational(&sh[1])?);
                let mut mats = Vec::new();
                for key in ["phi", "psi", "ks", "kt"] {
                    lines.keyed(key, Some(0))?;
                    mats.push(parse_matrix(&mut lines, &ring, &names)?);
                }
                lines.keyed("end", Some(0))?;
                let mut it = mats.into_iter();
                let mut take = || it.next().expect("four blocks");
                let data = ContinuationData {
                    phi: take(),
                    psi: take(),
                    k_s: take(),
                    k_t: take(),
                    shift_bounds,
                };
                blocks.push(ContinuationBlock { s, t, data });
            }
            "end" if toks.len() == 1 => break,
            other => return Err(at(&toks[0], format!("unexpected `{other}`"))),
        }
    }
    if let Some(t) = lines.peek() {
        return Err(at(&t[0], "content after final `end`"));
    }
    let line = lines.last_line;
    ComplexData::new(ring, gens, fam, blocks).map_err(|e| err(line, 1, e.to_string()))
}

/// Terms as `c[a1,...,ak]`, space-separated, in exponent order.
pub fn format_element(x: &NovikovElement) -> String {
    let mut out = String::new();
    for (a, c) in x.terms() {
        if !out.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{}{}", format_rational(c), a);
    }
    out
}

/// `name: terms` per nonzero coefficient, joined by `; `; `0` for the zero chain.
pub fn format_chain(cx: &ComplexData, c: &Chain) -> String {
    if c.is_zero() {
        return "0".into();
    }
    c.coeffs()
        .iter()
        .map(|(i, x)| format!("{}: {}", cx.generators()[*i].name, format_element(x)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn emit_matrix(out: &mut String, m: &Matrix, gens: &[CappedGenerator]) {
    for ((r, c), x) in m.entries() {
        let _ = writeln!(
            out,
            "entry {} {} {}",
            gens[*r].name,
            gens[*c].name,
            format_element(x)
        );
    }
    out.push_str("end\n");
}

/// Canonical text for a complex; `parse_complex` followed by `emit_complex` is the identity on
/// this output.
pub fn emit_complex(cx: &ComplexData) -> String {
    let ring = cx.ring();
    let mut out = String::new();
    let join = |v: &[Rational]| v.iter().map(format_rational).collect::<Vec<_>>();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "field {}", ring.field);
    let _ = writeln!(out, "mode {}", ring.mode);
    let _ = writeln!(out, "cutoff {}", format_rational(&ring.cutoff));
    let _ = writeln!(out, "periods {}", ring.rank());
    let line = |key: &str, v: &[Rational]| {
        let mut parts = vec![key.to_string()];
        parts.extend(join(v));
        parts.join(" ")
    };
    let _ = writeln!(out, "{}", line("omega0", ring.system.omega0()));
    let _ = writeln!(out, "{}", line("omega1", ring.system.omega1()));
    let gens = cx.generators();
    let _ = writeln!(out, "generators {}", gens.len());
    for g in gens {
        let _ = writeln!(
            out,
            "gen {} {} {} {}",
            g.name,
            g.degree,
            format_rational(&g.action0),
            format_rational(&g.slope)
        );
    }
    for (s, m) in cx.boundary().samples() {
        let _ = writeln!(out, "boundary {}", format_rational(s));
        emit_matrix(&mut out, m, gens);
    }
    for b in cx.continuations() {
        let _ = writeln!(
            out,
            "continuation {} {}",
            format_rational(&b.s),
            format_rational(&b.t)
        );
        let (s1, s2) = &b.data.shift_bounds;
        let _ = writeln!(
            out,
            "shifts {} {}",
            format_rational(s1),
            format_rational(s2)
        );
        for (key, m) in [
            ("phi", &b.data.phi),
            ("psi", &b.data.psi),
            ("ks", &b.data.k_s),
            ("kt", &b.data.k_t),
        ] {
            let _ = writeln!(out, "{key}");
            emit_matrix(&mut out, m, gens);
        }
        out.push_str("end\n");
    }
    out.push_str("end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gen_random, line_family, ModelSpec};
    use crate::rational::{q, qi};

    const SAMPLE: &str = "\
floerkit-complex 1
# a single bar
field f2
mode interval
cutoff 6
periods 2
omega0 1 2
omega1 2 1
generators 2
gen x 0 1 0
gen y 1 3 0   # killer
boundary 0
entry x y 1[0,0] 1[1,0]
end
end
";

    #[test]
    fn parses_sample() {
        let cx = parse_complex(SAMPLE).unwrap();
        assert_eq!(cx.len(), 2);
        let d = cx.boundary().get(&qi(0)).unwrap();
        assert_eq!(format_element(d.get(0, 1).unwrap()), "1[0,0] 1[1,0]");
        let again = emit_complex(&cx);
        assert_eq!(emit_complex(&parse_complex(&again).unwrap()), again);
    }

    #[test]
    fn round_trip_of_models() {
        for seed in 0..5 {
            let sys = crate::exponents::PeriodSystem::new(vec![qi(1), qi(3)], vec![qi(1), qi(3)])
                .unwrap();
            let spec = ModelSpec {
                seed,
                system: sys,
                samples: vec![qi(0), q(1, 2)],
                ..ModelSpec::default()
            };
            let base = gen_random(&spec).unwrap();
            let slopes = vec![q(1, 8); base.len()];
            let cx = line_family(&base, &slopes, &qi(1)).unwrap();
            let text = emit_complex(&cx);
            let back = parse_complex(&text).unwrap();
            assert_eq!(back, cx);
            assert_eq!(emit_complex(&back), text);
        }
    }

    #[test]
    fn errors_carry_positions() {
        let bad = SAMPLE.replace("gen y 1 3 0", "gen y 1 3/0 0");
        match parse_complex(&bad) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (11, 9)),
            other => panic!("{other:?}"),
        }
        let truncated: String = SAMPLE.lines().take(13).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            parse_complex(&truncated),
            Err(Error::Parse { .. })
        ));
        let unknown = SAMPLE.replace("mode interval", "mode interval\nflavour sweet");
        match parse_complex(&unknown) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (5, 1)),
            other => panic!("{other:?}"),
        }
        let dup = SAMPLE.replace("gen y", "gen x");
        assert!(matches!(
            parse_complex(&dup),
            Err(Error::Parse { line: 11, .. })
        ));
        let rank = SAMPLE.replace("1[1,0]", "1[1]");
        match parse_complex(&rank) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (13, 18)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            field: Some(Field::Rationals),
            cutoff: Some(q(7, 2)),
        };
        let cx = parse_complex_with(SAMPLE, &o).unwrap();
        assert_eq!(cx.ring().field, Field::Rationals);
        assert_eq!(cx.ring().cutoff, q(7, 2));
        assert_eq!(parse_field_name("fp:5").unwrap(), Field::Prime(5));
        assert!(parse_field_name("r").is_err());
    }
}
