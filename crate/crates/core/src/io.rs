//! Plain-text CSV and binary PGM output, and fit-data ingestion.

use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fitting::{DataKind, DataPoint};
use crate::hamiltonian::FieldVector;
use crate::presets::State;

/// Formats like C's `%.9g`.
pub fn format_g9(x: f64) -> String {
    const PRECISION: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Num(v) => out.push_str(&format_g9(*v)),
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                let _ = write!(out, "\"{}\"", s.replace('"', "\"\""));
            }
            Cell::Text(s) => out.push_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text with `\n` line endings; `stamp` becomes a leading `# ` line.
    pub fn render(&self, stamp: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(s) = stamp {
            let _ = writeln!(out, "# {s}");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

/// Byte for a signed amplitude in [−1, 1]; 0 maps to mid-grey 128.
pub fn gray_level(a: f64) -> u8 {
    let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
    (128.0 + (127.0 * a).round()) as u8
}

/// Binary 8-bit PGM (P5); one image row per input row.
pub fn render_pgm(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 {
        return Err(Error::InvalidInput("cannot render an empty map".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidInput("map rows differ in length".into()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(rows.iter().flat_map(|r| r.iter().map(|&a| gray_level(a))));
    Ok(out)
}

/// Splits one CSV line, honouring double-quoted fields.
pub fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                current.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    fields.push(current);
    fields.into_iter().map(|f| f.trim().to_string()).collect()
}

/// Parses a level-pair label such as `1-3` (1-based) into 0-based indices.
pub fn parse_label(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once(['-', ':'])?;
    let (i, j): (usize, usize) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
    if (1..=4).contains(&i) && (1..=4).contains(&j) && i < j {
        Some((i - 1, j - 1))
    } else {
        None
    }
}

/// Reads fit data. Required columns: `kind, state, value` plus either
/// `Bx_mT, By_mT, Bz_mT` or `dir_x, dir_y, dir_z, B_mT`; optional `sigma`,
/// `label`, `mw_GHz`. Blank lines and `#` comments are skipped.
pub fn parse_data_csv(text: &str) -> Result<Vec<DataPoint>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "missing header".into(),
    })?;
    let columns = split_csv_line(header);
    let find = |name: &str| columns.iter().position(|c| c.eq_ignore_ascii_case(name));
    for c in &columns {
        const KNOWN: [&str; 13] = [
            "kind", "state", "Bx_mT", "By_mT", "Bz_mT", "dir_x", "dir_y", "dir_z", "B_mT", "value", "sigma", "label",
            "mw_GHz",
        ];
        if !KNOWN.iter().any(|k| k.eq_ignore_ascii_case(c)) {
            return Err(Error::Parse {
                line: header_line,
                message: format!("unknown column `{c}`"),
            });
        }
    }
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Parse {
            line: header_line,
            message: format!("missing column `{name}`"),
        })
    };
    let kind_col = need("kind")?;
    let state_col = need("state")?;
    let value_col = need("value")?;
    let vector_cols = match (find("Bx_mT"), find("By_mT"), find("Bz_mT")) {
        (Some(x), Some(y), Some(z)) => Ok((x, y, z, None)),
        _ => match (find("dir_x"), find("dir_y"), find("dir_z"), find("B_mT")) {
            (Some(x), Some(y), Some(z), Some(m)) => Ok((x, y, z, Some(m))),
            _ => Err(Error::Parse {
                line: header_line,
                message: "need Bx_mT,By_mT,Bz_mT or dir_x,dir_y,dir_z,B_mT columns".into(),
            }),
        },
    }?;
    let (sigma_col, label_col, mw_col) = (find("sigma"), find("label"), find("mw_GHz"));
    let mut out = Vec::new();
    for (line, text) in lines {
        let fields = split_csv_line(text);
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let err = |message: String| Error::Parse { line, message };
        let num = |col: usize| -> Result<f64> {
            fields[col].parse::<f64>().map_err(|_| {
                err(format!(
                    "`{}` is not a number in column `{}`",
                    fields[col], columns[col]
                ))
            })
        };
        let optional = |col: Option<usize>| -> Result<Option<f64>> {
            match col {
                Some(c) if !fields[c].is_empty() => num(c).map(Some),
                _ => Ok(None),
            }
        };
        let kind =
            DataKind::parse(&fields[kind_col]).ok_or_else(|| err(format!("unknown kind `{}`", fields[kind_col])))?;
        let state =
            State::parse(&fields[state_col]).ok_or_else(|| err(format!("unknown state `{}`", fields[state_col])))?;
        let (x, y, z, m) = vector_cols;
        let mut v = Vector3::new(num(x)?, num(y)?, num(z)?);
        if let Some(m) = m {
            let norm = v.norm();
            if !(norm > 0.0) {
                return Err(err("direction must be non-zero".into()));
            }
            v *= num(m)? / norm;
        }
        let label = match label_col {
            Some(c) if !fields[c].is_empty() => {
                Some(parse_label(&fields[c]).ok_or_else(|| err(format!("bad transition label `{}`", fields[c])))?)
            }
            _ => None,
        };
        let point = DataPoint {
            kind,
            state,
            field: FieldVector(v),
            value: num(value_col)?,
            sigma: optional(sigma_col)?.unwrap_or(kind.default_sigma()),
            label,
            mw_ghz: optional(mw_col)?,
        };
        point.validate().map_err(|e| err(e.to_string()))?;
        out.push(point);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_c() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-1.72275, "-1.72275"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (2.0 / 3.0 * 1e-7, "6.66666667e-08"),
            (999999999.5, "1e+09"),
            (100.0, "100"),
            (f64::NAN, "nan"),
        ];
        for (x, s) in cases {
            assert_eq!(format_g9(x), s, "{x}");
        }
    }

    #[test]
    fn gray_levels() {
        assert_eq!(gray_level(0.0), 128);
        assert_eq!(gray_level(1.0), 255);
        assert_eq!(gray_level(-1.0), 1);
        assert_eq!(gray_level(7.0), 255);
    }

    #[test]
    fn pgm_header() {
        let p = render_pgm(&[vec![0.0, 1.0], vec![-1.0, 0.5]]).unwrap();
        assert!(p.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&p[p.len() - 4..], &[128, 255, 1, 192]);
        assert!(render_pgm(&[]).is_err());
    }

    #[test]
    fn csv_roundtrip_text() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec![Cell::Num(0.5), "x,y".into()]);
        assert_eq!(t.render(None), "a,b\n0.5,\"x,y\"\n");
        assert_eq!(split_csv_line("0.5,\"x,y\""), vec!["0.5", "x,y"]);
    }

    #[test]
    fn parse_data() {
        let text = "# comment\nkind,state,Bx_mT,By_mT,Bz_mT,value,sigma,label,mw_GHz\n\
                    SHB,ground,10,0,0,0.8,0.002,1-2,\n\
                    EPR,ground,1,0,0,250,,,9.7\n";
        let d = parse_data_csv(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].label, Some((0, 1)));
        assert_eq!(d[1].sigma, 0.5);
        assert_eq!(d[1].mw_ghz, Some(9.7));
        let bad = "kind,state,Bx_mT,By_mT,Bz_mT,value\nSHB,ground,1,0,0,zz\n";
        assert!(matches!(parse_data_csv(bad), Err(Error::Parse { line: 2, .. })));
        assert!(parse_data_csv("kind,state,value,foo\n").is_err());
    }

    #[test]
    fn parse_direction_magnitude() {
        let text = "kind,state,dir_x,dir_y,dir_z,B_mT,value\nODMR,g,0,3,4,10,2.0\n";
        let d = parse_data_csv(text).unwrap();
        assert!((d[0].field.0 - Vector3::new(0.0, 6.0, 8.0)).norm() < 1e-12);
    }
}
