//! Versioned text checkpoint format for heads.
//!
//! ```text
//! FERHEADS 1
//! kind multi
//! feature_dim 4
//! landmark_dim 0
//! head expression 8 4 normalized 64
//! row 0.1 -0.2 0.3 0.4
//! ...          (one `row` line per output)
//! bias none    (or `bias b_1 .. b_out`)
//! head valence 1 4 plain
//! ...
//! end
//! ```
//!
//! Pair dictionaries use `kind pairdict`, a `mode`/`input_dim`/`pairs`
//! preamble, and one `pair lo hi` block per entry. Blank lines and lines
//! beginning with `#` are ignored. Floats are written with Rust's shortest
//! round-trip formatting, so save -> load is exact and byte-stable.

use crate::dataset::{NUM_CLASSES, PairKey};
use crate::error::{Error, Result};
use crate::heads::{LinearHead, MultiOutputHead, PairMode, PairwiseHeadDict};
use crate::linalg::Matrix;
use std::io::{BufRead, Write};

pub const FORMAT_MAGIC: &str = "FERHEADS";
pub const FORMAT_VERSION: u32 = 1;

/// Either kind of checkpoint, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Multi(MultiOutputHead),
    PairDict(PairwiseHeadDict),
}

struct Lines<R: BufRead> {
    source: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(source: R) -> Self {
        Lines { source: source.lines(), line_no: 0 }
    }

    /// Next significant line as whitespace-split tokens.
    fn next_tokens(&mut self) -> Result<Vec<String>> {
        loop {
            self.line_no += 1;
            let line = self
                .source
                .next()
                .ok_or_else(|| Error::data_at(self.line_no, "unexpected end of checkpoint"))??;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(trimmed.split_whitespace().map(str::to_string).collect());
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<Vec<String>> {
        let tokens = self.next_tokens()?;
        if tokens[0] != keyword {
            return Err(Error::data_at(
                self.line_no,
                format!("expected {keyword:?}, found {:?}", tokens[0]),
            ));
        }
        Ok(tokens)
    }

    /// One-value directive like `feature_dim 16`.
    fn expect_value(&mut self, keyword: &str) -> Result<String> {
        let tokens = self.expect(keyword)?;
        if tokens.len() != 2 {
            return Err(self.err(format!("{keyword} line needs exactly one value")));
        }
        Ok(tokens[1].clone())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::data_at(self.line_no, msg.into())
    }
}

fn parse_usize_token(lines: &Lines<impl BufRead>, token: &str, what: &str) -> Result<usize> {
    token.parse().map_err(|_| lines.err(format!("bad {what} {token:?}")))
}

fn parse_f64_token(lines: &Lines<impl BufRead>, token: &str, what: &str) -> Result<f64> {
    let v: f64 =
        token.parse().map_err(|_| lines.err(format!("bad {what} {token:?}")))?;
    if !v.is_finite() {
        return Err(lines.err(format!("non-finite {what} {token:?}")));
    }
    Ok(v)
}

fn write_head<W: Write>(out: &mut W, name: &str, head: &LinearHead) -> Result<()> {
    write!(out, "head {name} {} {}", head.out_dim(), head.in_dim())?;
    if head.is_normalized() {
        writeln!(out, " normalized {}", head.scale())?;
    } else {
        writeln!(out, " plain")?;
    }
    for r in 0..head.out_dim() {
        write!(out, "row")?;
        for v in head.weights().row(r) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    match head.bias() {
        None => writeln!(out, "bias none")?,
        Some(b) => {
            write!(out, "bias")?;
            for v in b {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn read_head<R: BufRead>(
    lines: &mut Lines<R>,
    name: &str,
    expect_dims: (usize, usize),
) -> Result<LinearHead> {
    let tokens = lines.expect("head")?;
    if tokens.len() < 5 {
        return Err(lines.err("head line needs: head <name> <out> <in> <plain|normalized scale>"));
    }
    if tokens[1] != name {
        return Err(lines.err(format!("expected head {name:?}, found {:?}", tokens[1])));
    }
    let out_dim = parse_usize_token(lines, &tokens[2], "output dim")?;
    let in_dim = parse_usize_token(lines, &tokens[3], "input dim")?;
    if out_dim == 0 || in_dim == 0 {
        return Err(lines.err("head dimensions must be positive"));
    }
    if (out_dim, in_dim) != expect_dims {
        return Err(lines.err(format!(
            "{name} head must be {}x{}, found {out_dim}x{in_dim}",
            expect_dims.0, expect_dims.1
        )));
    }
    let (normalized, scale) = match tokens[4].as_str() {
        "plain" => (false, 1.0),
        "normalized" => {
            let s = tokens.get(5).ok_or_else(|| lines.err("normalized head needs a scale"))?;
            (true, parse_f64_token(lines, s, "scale")?)
        }
        other => return Err(lines.err(format!("expected plain|normalized, found {other:?}"))),
    };
    let mut data = Vec::new();
    for _ in 0..out_dim {
        let tokens = lines.expect("row")?;
        if tokens.len() != in_dim + 1 {
            return Err(lines.err(format!("row needs {in_dim} values, found {}", tokens.len() - 1)));
        }
        for t in &tokens[1..] {
            data.push(parse_f64_token(lines, t, "weight")?);
        }
    }
    let weights = Matrix::from_vec(out_dim, in_dim, data).expect("sized by construction");
    let tokens = lines.expect("bias")?;
    let bias = if tokens.len() == 2 && tokens[1] == "none" {
        None
    } else {
        if tokens.len() != out_dim + 1 {
            return Err(lines.err(format!("bias needs {out_dim} values or none, found {}", tokens.len() - 1)));
        }
        Some(tokens[1..].iter().map(|t| parse_f64_token(lines, t, "bias")).collect::<Result<Vec<f64>>>()?)
    };
    LinearHead::new(weights, bias, normalized, scale)
}

/// Write a multi-output head checkpoint.
pub fn save_multi<W: Write>(head: &MultiOutputHead, mut out: W) -> Result<()> {
    writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "kind multi")?;
    writeln!(out, "feature_dim {}", head.feature_dim())?;
    let landmark_dim = head.landmarks.as_ref().map_or(0, LinearHead::out_dim);
    writeln!(out, "landmark_dim {landmark_dim}")?;
    write_head(&mut out, "expression", &head.expression)?;
    write_head(&mut out, "valence", &head.valence)?;
    write_head(&mut out, "arousal", &head.arousal)?;
    if let Some(lm) = &head.landmarks {
        write_head(&mut out, "landmarks", lm)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

/// Write a pair-dictionary checkpoint.
pub fn save_pairdict<W: Write>(dict: &PairwiseHeadDict, mut out: W) -> Result<()> {
    writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "kind pairdict")?;
    let mode = match dict.mode() {
        PairMode::Stacked => "stacked",
        PairMode::Detached => "detached",
    };
    writeln!(out, "mode {mode}")?;
    let input_dim = dict.entries().next().map_or(0, |(_, h)| h.in_dim());
    writeln!(out, "input_dim {input_dim}")?;
    writeln!(out, "pairs {}", dict.len())?;
    for (key, head) in dict.entries() {
        writeln!(out, "pair {} {}", key.lo(), key.hi())?;
        write_head(&mut out, "pair", head)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

fn read_preamble<R: BufRead>(lines: &mut Lines<R>) -> Result<String> {
    let tokens = lines.next_tokens()?;
    if tokens.len() != 2 || tokens[0] != FORMAT_MAGIC {
        return Err(lines.err(format!("not a {FORMAT_MAGIC} checkpoint")));
    }
    let version = parse_usize_token(lines, &tokens[1], "format version")?;
    if version != FORMAT_VERSION as usize {
        return Err(lines.err(format!("unsupported format version {version}")));
    }
    let tokens = lines.expect("kind")?;
    if tokens.len() != 2 {
        return Err(lines.err("kind line needs one value"));
    }
    Ok(tokens[1].clone())
}

fn read_multi<R: BufRead>(lines: &mut Lines<R>) -> Result<MultiOutputHead> {
    let token = lines.expect_value("feature_dim")?;
    let feature_dim = parse_usize_token(lines, &token, "feature_dim")?;
    let token = lines.expect_value("landmark_dim")?;
    let landmark_dim = parse_usize_token(lines, &token, "landmark_dim")?;

    if feature_dim == 0 {
        return Err(lines.err("feature_dim must be positive"));
    }
    let expression = read_head(lines, "expression", (NUM_CLASSES, feature_dim))?;
    let valence = read_head(lines, "valence", (1, feature_dim))?;
    let arousal = read_head(lines, "arousal", (1, feature_dim))?;
    let landmarks = if landmark_dim > 0 {
        Some(read_head(lines, "landmarks", (landmark_dim, feature_dim))?)
    } else {
        None
    };
    lines.expect("end")?;
    Ok(MultiOutputHead { expression, valence, arousal, landmarks })
}

fn read_pairdict<R: BufRead>(lines: &mut Lines<R>) -> Result<PairwiseHeadDict> {
    let tokens = lines.expect("mode")?;
    let mode = match tokens.get(1).map(String::as_str) {
        Some("stacked") => PairMode::Stacked,
        Some("detached") => PairMode::Detached,
        other => return Err(lines.err(format!("unknown pair mode {other:?}"))),
    };
    let token = lines.expect_value("input_dim")?;
    let input_dim = parse_usize_token(lines, &token, "input_dim")?;
    if mode == PairMode::Stacked && input_dim != NUM_CLASSES {
        return Err(lines.err(format!("stacked dictionary input_dim must be {NUM_CLASSES}")));
    }
    let token = lines.expect_value("pairs")?;
    let count = parse_usize_token(lines, &token, "pair count")?;
    let mut dict = PairwiseHeadDict::new(mode);
    for _ in 0..count {
        let tokens = lines.expect("pair")?;
        if tokens.len() != 3 {
            return Err(lines.err("pair line needs two class indices"));
        }
        let lo = parse_usize_token(lines, &tokens[1], "class index")?;
        let hi = parse_usize_token(lines, &tokens[2], "class index")?;
        let key = PairKey::new(lo, hi).map_err(|e| lines.err(e.to_string()))?;
        if lo > hi || dict.get(&key).is_some() {
            return Err(lines.err(format!("duplicate or non-canonical pair {lo} {hi}")));
        }
        let head = read_head(lines, "pair", (2, input_dim))?;
        dict.insert(key, head).map_err(|e| lines.err(e.to_string()))?;
    }
    lines.expect("end")?;
    Ok(dict)
}

/// Parse either kind of checkpoint.
pub fn load_checkpoint<R: BufRead>(source: R) -> Result<Checkpoint> {
    let mut lines = Lines::new(source);
    match read_preamble(&mut lines)?.as_str() {
        "multi" => Ok(Checkpoint::Multi(read_multi(&mut lines)?)),
        "pairdict" => Ok(Checkpoint::PairDict(read_pairdict(&mut lines)?)),
        other => Err(lines.err(format!("unknown checkpoint kind {other:?}"))),
    }
}

pub fn load_multi<R: BufRead>(source: R) -> Result<MultiOutputHead> {
    match load_checkpoint(source)? {
        Checkpoint::Multi(head) => Ok(head),
        Checkpoint::PairDict(_) => Err(Error::data("expected a multi-output checkpoint, found a pair dictionary")),
    }
}

pub fn load_pairdict<R: BufRead>(source: R) -> Result<PairwiseHeadDict> {
    match load_checkpoint(source)? {
        Checkpoint::PairDict(dict) => Ok(dict),
        Checkpoint::Multi(_) => Err(Error::data("expected a pair-dictionary checkpoint, found a multi-output head")),
    }
}

pub fn load_multi_path(path: &std::path::Path) -> Result<MultiOutputHead> {
    load_multi(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn load_pairdict_path(path: &std::path::Path) -> Result<PairwiseHeadDict> {
    load_pairdict(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_multi_path(head: &MultiOutputHead, path: &std::path::Path) -> Result<()> {
    save_multi(head, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_pairdict_path(dict: &PairwiseHeadDict, path: &std::path::Path) -> Result<()> {
    save_pairdict(dict, std::io::BufWriter::new(std::fs::File::create(path)?))
}
