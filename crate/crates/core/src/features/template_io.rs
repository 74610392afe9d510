//! Line-oriented text format for templates:
//!
//! ```text
//! RVT1
//! <width> <height> <ridge|valley>
//! <minutia count>
//! <x> <y> <theta> <E|B> <quality>
//! <singularity count>
//! <x> <y> <C|D>
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle
//! reproduces the template exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{
    build_template, Channel, Minutia, MinutiaKind, Singularity, SingularityKind, Template,
};
use crate::error::{Error, Result};

pub const TEMPLATE_MAGIC: &str = "RVT1";

pub fn format_template(t: &Template) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TEMPLATE_MAGIC}");
    let _ = writeln!(s, "{} {} {}", t.width, t.height, t.channel);
    let _ = writeln!(s, "{}", t.minutiae.len());
    for m in &t.minutiae {
        let kind = match m.kind {
            MinutiaKind::Ending => 'E',
            MinutiaKind::Bifurcation => 'B',
        };
        let _ = writeln!(
            s,
            "{:?} {:?} {:?} {kind} {:?}",
            m.x, m.y, m.theta, m.quality
        );
    }
    let _ = writeln!(s, "{}", t.singularities.len());
    for p in &t.singularities {
        let kind = match p.kind {
            SingularityKind::Core => 'C',
            SingularityKind::Delta => 'D',
        };
        let _ = writeln!(s, "{:?} {:?} {kind}", p.x, p.y);
    }
    s
}

pub fn write_template(t: &Template, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_template(t)).map_err(|e| Error::io(path, e))
}

/// Reads a template; its source id is the file stem.
pub fn read_template(path: impl AsRef<Path>) -> Result<Template> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_template(&text, id)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.inner.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok((i + 1, line.split_whitespace().collect()))
            }
            None => Err(Error::TemplateFormat {
                line: self.last + 1,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::TemplateFormat {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| bad(line, format!("invalid {what} {s:?}")))
}

fn float(line: usize, s: &str, what: &str) -> Result<f64> {
    let v: f64 = num(line, s, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(line, format!("{what} is not finite")))
    }
}

pub fn parse_template(text: &str, source_id: impl Into<String>) -> Result<Template> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, f) = lines.next_fields("header")?;
    if f != [TEMPLATE_MAGIC] {
        return Err(bad(ln, format!("expected {TEMPLATE_MAGIC:?}")));
    }
    let (ln, f) = lines.next_fields("dimensions")?;
    if f.len() != 3 {
        return Err(bad(ln, "expected `<width> <height> <channel>`"));
    }
    let width: usize = num(ln, f[0], "width")?;
    let height: usize = num(ln, f[1], "height")?;
    let channel: Channel = f[2]
        .parse()
        .map_err(|_| bad(ln, format!("invalid channel {:?}", f[2])))?;

    let (ln, f) = lines.next_fields("minutia count")?;
    if f.len() != 1 {
        return Err(bad(ln, "expected minutia count"));
    }
    let n: usize = num(ln, f[0], "minutia count")?;
    let mut minutiae = Vec::with_capacity(n.min(10_000));
    for _ in 0..n {
        let (ln, f) = lines.next_fields("minutia")?;
        if f.len() != 5 {
            return Err(bad(ln, "expected `<x> <y> <theta> <E|B> <quality>`"));
        }
        let kind = match f[3] {
            "E" => MinutiaKind::Ending,
            "B" => MinutiaKind::Bifurcation,
            other => return Err(bad(ln, format!("invalid minutia type {other:?}"))),
        };
        let theta = float(ln, f[2], "theta")?;
        if !(0.0..std::f64::consts::TAU).contains(&theta) {
            return Err(bad(ln, "theta outside [0, 2pi)"));
        }
        let quality = float(ln, f[4], "quality")?;
        if !(0.0..=1.0).contains(&quality) {
            return Err(bad(ln, "quality outside [0, 1]"));
        }
        minutiae.push(Minutia {
            x: float(ln, f[0], "x")?,
            y: float(ln, f[1], "y")?,
            theta,
            kind,
            quality,
        });
    }
    let (ln, f) = lines.next_fields("singularity count")?;
    if f.len() != 1 {
        return Err(bad(ln, "expected singularity count"));
    }
    let m: usize = num(ln, f[0], "singularity count")?;
    let mut singularities = Vec::with_capacity(m.min(1000));
    for _ in 0..m {
        let (ln, f) = lines.next_fields("singularity")?;
        if f.len() != 3 {
            return Err(bad(ln, "expected `<x> <y> <C|D>`"));
        }
        let kind = match f[2] {
            "C" => SingularityKind::Core,
            "D" => SingularityKind::Delta,
            other => return Err(bad(ln, format!("invalid singularity type {other:?}"))),
        };
        singularities.push(Singularity::new(
            float(ln, f[0], "x")?,
            float(ln, f[1], "y")?,
            kind,
        ));
    }
    for (i, line) in lines.inner {
        if !line.trim().is_empty() {
            return Err(bad(i + 1, "trailing content"));
        }
    }
    let n_in = minutiae.len();
    let t = build_template(minutiae, singularities, (width, height), channel, source_id).map_err(
        |e| match e {
            Error::InvalidParameter(msg) => bad(0, msg),
            other => other,
        },
    )?;
    if t.minutiae.len() != n_in {
        return Err(bad(0, "duplicate minutiae"));
    }
    Ok(t)
}
