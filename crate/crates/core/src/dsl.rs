//! A line-oriented circuit description language, an operator library file
//! format, a directive runner and a dot emitter.
//!
//! Document grammar, one statement per line (`#` starts a whole-line comment):
//!
//! ```text
//! type NAME dim INT
//! library STRING
//! op NAME : TYPES -> TYPES [= lib STRING | = CALL]
//! node NAME uses OP
//! wire NODE.outINT -> NODE.inINT
//! eval | physical OP | ratio OP OP | render STRING
//! ```
//!
//! `TYPES` is `()` or a comma-separated list of type names. `CALL` is a
//! gadget constructor such as `cnot()`, `bloch(0, 0, 1)`, `filter(a, [1, 2])`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::circuit::{FragmentNode, SystemType, TypeRegistry, WireGraph};
use crate::duotensor::{fiducial_vectors, FiducialFamily};
use crate::error::{Error, Result};
use crate::fragment::{eval_circuit, ContractionOrder, OperatorFragment};
use crate::gadgets::{
    basis_state, bloch_state, cnot_fragment, entanglement_swap_demo, equatorial_state, filter_fragment, max_entangled, teleportation_demo,
    BlochPoint, Role, Subspace,
};
use crate::linalg::{CMatrix, C64};
use crate::physicality::{deterministic_effect, is_physical, probability_ratio, PhysicalityReport, RatioVerdict, RATIO_TOL};

/// The parser stops collecting diagnostics after this many.
pub const MAX_DIAGNOSTICS: usize = 20;
/// Entry-wise Hermiticity tolerance for library matrices.
pub const LIBRARY_HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Arg {
    Num(f64),
    Ident(String),
    Str(String),
    List(Vec<f64>),
    Call(Call),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Call {
    pub name: String,
    pub args: Vec<Arg>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    /// An entry of a loaded library.
    Lib(String),
    Gadget(Call),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Directive {
    Eval,
    Physical(String),
    Ratio(String, String),
    Render(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Blank,
    Comment(String),
    Type { name: String, dim: usize },
    Library(String),
    Op { name: String, inputs: Vec<String>, outputs: Vec<String>, source: Option<Source> },
    Node { id: String, op: String },
    Wire { from: String, out_port: usize, to: String, in_port: usize },
    Directive(Directive),
}

/// Statement `k` sits on line `k + 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CircuitDocument {
    pub stmts: Vec<Stmt>,
}

// ---------------------------------------------------------------- lexing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Arrow,
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Syntax { line, col, msg: msg.into() }
}

fn lex(text: &str, line: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), col });
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) || c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| syntax(line, col, format!("malformed number `{s}`")))?;
            out.push(Token { tok: Tok::Num(v), col });
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(syntax(line, col, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(syntax(line, i + 1, "unknown escape")),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), col });
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Token { tok: Tok::Arrow, col });
            i += 2;
        } else if ":,.=()[]".contains(c) {
            out.push(Token { tok: Tok::Sym(c), col });
            i += 1;
        } else {
            return Err(syntax(line, col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Cursor {
    fn new(text: &str, line: usize) -> Result<Self> {
        Ok(Cursor { toks: lex(text, line)?, pos: 0, line, end_col: text.chars().count() + 1 })
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        syntax(self.line, self.col(), msg)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn sym(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn arrow(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err("expected `->`"))
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.peek() {
            Some(&Tok::Num(v)) => {
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected a number")),
        }
    }

    fn positive_int(&mut self) -> Result<usize> {
        let col = self.col();
        let v = self.number()?;
        if v.fract() != 0.0 || v < 1.0 {
            return Err(syntax(self.line, col, "expected a positive integer"));
        }
        Ok(v as usize)
    }

    fn string(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected a string")),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos < self.toks.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- parsing

fn parse_types(c: &mut Cursor) -> Result<Vec<String>> {
    if c.peek() == Some(&Tok::Sym('(')) {
        c.sym('(')?;
        c.sym(')')?;
        return Ok(Vec::new());
    }
    let mut out = vec![c.ident("a type name or `()`")?];
    while c.peek() == Some(&Tok::Sym(',')) {
        c.sym(',')?;
        out.push(c.ident("a type name")?);
    }
    Ok(out)
}

fn parse_call(c: &mut Cursor, name: String) -> Result<Call> {
    c.sym('(')?;
    let mut args = Vec::new();
    if c.peek() != Some(&Tok::Sym(')')) {
        loop {
            args.push(parse_arg(c)?);
            if c.peek() == Some(&Tok::Sym(',')) {
                c.sym(',')?;
            } else {
                break;
            }
        }
    }
    c.sym(')')?;
    Ok(Call { name, args })
}

fn parse_arg(c: &mut Cursor) -> Result<Arg> {
    match c.peek() {
        Some(Tok::Num(_)) => Ok(Arg::Num(c.number()?)),
        Some(Tok::Str(_)) => Ok(Arg::Str(c.string()?)),
        Some(Tok::Sym('[')) => {
            c.sym('[')?;
            let mut xs = Vec::new();
            if c.peek() != Some(&Tok::Sym(']')) {
                xs.push(c.number()?);
                while c.peek() == Some(&Tok::Sym(',')) {
                    c.sym(',')?;
                    xs.push(c.number()?);
                }
            }
            c.sym(']')?;
            Ok(Arg::List(xs))
        }
        Some(Tok::Ident(_)) => {
            let name = c.ident("an argument")?;
            if c.peek() == Some(&Tok::Sym('(')) {
                Ok(Arg::Call(parse_call(c, name)?))
            } else {
                Ok(Arg::Ident(name))
            }
        }
        _ => Err(c.err("expected an argument")),
    }
}

fn parse_port(c: &mut Cursor, prefix: &str) -> Result<(String, usize)> {
    let node = c.ident("a node name")?;
    c.sym('.')?;
    let col = c.col();
    let port = c.ident(&format!("`{prefix}N`"))?;
    let k = port
        .strip_prefix(prefix)
        .and_then(|d| d.parse::<usize>().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(|| syntax(c.line, col, format!("expected `{prefix}N` with N >= 1, found `{port}`")))?;
    Ok((node, k))
}

fn parse_stmt(text: &str, line: usize) -> Result<Stmt> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Stmt::Blank);
    }
    if let Some(rest) = trimmed.strip_prefix('#') {
        return Ok(Stmt::Comment(rest.trim().to_string()));
    }
    let mut c = Cursor::new(text, line)?;
    let kw = c.ident("a statement keyword")?;
    let stmt = match kw.as_str() {
        "type" => {
            let name = c.ident("a type name")?;
            c.keyword("dim")?;
            Stmt::Type { name, dim: c.positive_int()? }
        }
        "library" => Stmt::Library(c.string()?),
        "op" => {
            let name = c.ident("an operator name")?;
            c.sym(':')?;
            let inputs = parse_types(&mut c)?;
            c.arrow()?;
            let outputs = parse_types(&mut c)?;
            let source = if c.peek() == Some(&Tok::Sym('=')) {
                c.sym('=')?;
                let head = c.ident("`lib` or a gadget name")?;
                if head == "lib" {
                    Some(Source::Lib(c.string()?))
                } else {
                    Some(Source::Gadget(parse_call(&mut c, head)?))
                }
            } else {
                None
            };
            Stmt::Op { name, inputs, outputs, source }
        }
        "node" => {
            let id = c.ident("a node name")?;
            c.keyword("uses")?;
            Stmt::Node { id, op: c.ident("an operator name")? }
        }
        "wire" => {
            let (from, out_port) = parse_port(&mut c, "out")?;
            c.arrow()?;
            let (to, in_port) = parse_port(&mut c, "in")?;
            Stmt::Wire { from, out_port, to, in_port }
        }
        "eval" => Stmt::Directive(Directive::Eval),
        "physical" => Stmt::Directive(Directive::Physical(c.ident("an operator name")?)),
        "ratio" => {
            let a = c.ident("an operator name")?;
            Stmt::Directive(Directive::Ratio(a, c.ident("an operator name")?))
        }
        "render" => Stmt::Directive(Directive::Render(c.string()?)),
        other => return Err(syntax(line, 1 + text.len() - text.trim_start().len(), format!("unknown statement `{other}`"))),
    };
    c.finish()?;
    Ok(stmt)
}

/// Parses a document, collecting up to [`MAX_DIAGNOSTICS`] syntax errors.
pub fn parse(text: &str) -> std::result::Result<CircuitDocument, Vec<Error>> {
    let mut stmts = Vec::new();
    let mut diags = Vec::new();
    for (k, l) in text.lines().enumerate() {
        match parse_stmt(l, k + 1) {
            Ok(s) => stmts.push(s),
            Err(e) => {
                diags.push(e);
                if diags.len() == MAX_DIAGNOSTICS {
                    break;
                }
            }
        }
    }
    if diags.is_empty() {
        Ok(CircuitDocument { stmts })
    } else {
        Err(diags)
    }
}

// ---------------------------------------------------------------- printing

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn fmt_types(ts: &[String]) -> String {
    if ts.is_empty() {
        "()".into()
    } else {
        ts.join(", ")
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Num(v) => write!(f, "{v}"),
            Arg::Ident(s) => f.write_str(s),
            Arg::Str(s) => f.write_str(&quote(s)),
            Arg::List(xs) => write!(f, "[{}]", xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")),
            Arg::Call(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "))
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Blank => Ok(()),
            Stmt::Comment(c) if c.is_empty() => f.write_str("#"),
            Stmt::Comment(c) => write!(f, "# {c}"),
            Stmt::Type { name, dim } => write!(f, "type {name} dim {dim}"),
            Stmt::Library(p) => write!(f, "library {}", quote(p)),
            Stmt::Op { name, inputs, outputs, source } => {
                write!(f, "op {name} : {} -> {}", fmt_types(inputs), fmt_types(outputs))?;
                match source {
                    None => Ok(()),
                    Some(Source::Lib(e)) => write!(f, " = lib {}", quote(e)),
                    Some(Source::Gadget(c)) => write!(f, " = {c}"),
                }
            }
            Stmt::Node { id, op } => write!(f, "node {id} uses {op}"),
            Stmt::Wire { from, out_port, to, in_port } => write!(f, "wire {from}.out{out_port} -> {to}.in{in_port}"),
            Stmt::Directive(Directive::Eval) => f.write_str("eval"),
            Stmt::Directive(Directive::Physical(x)) => write!(f, "physical {x}"),
            Stmt::Directive(Directive::Ratio(a, b)) => write!(f, "ratio {a} {b}"),
            Stmt::Directive(Directive::Render(p)) => write!(f, "render {}", quote(p)),
        }
    }
}

/// Canonical text: one statement per line, newline-terminated.
impl fmt::Display for CircuitDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stmts {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

pub fn pretty_print(doc: &CircuitDocument) -> String {
    doc.to_string()
}

// ---------------------------------------------------------------- library

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Row-major over inputs then outputs.
    pub matrix: CMatrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorLibrary {
    pub types: Vec<SystemType>,
    pub entries: Vec<LibraryEntry>,
}

fn format_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format { line, msg: msg.into() }
}

impl OperatorLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ty(&self, name: &str) -> Option<&SystemType> {
        self.types.iter().find(|t| t.name() == name)
    }

    pub fn declare(&mut self, t: &SystemType) -> Result<()> {
        match self.ty(t.name()) {
            Some(old) if old.dim() != t.dim() => {
                Err(Error::TypeMismatch { label: t.name().into(), left: old.to_string(), right: t.to_string() })
            }
            Some(_) => Ok(()),
            None => {
                self.types.push(t.clone());
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Adds (or replaces) an entry from a fragment, declaring its port types.
    pub fn insert(&mut self, name: &str, f: &OperatorFragment) -> Result<()> {
        for p in f.inputs().iter().chain(f.outputs()) {
            self.declare(&p.ty)?;
        }
        let entry = LibraryEntry {
            name: name.into(),
            inputs: f.inputs().iter().map(|p| p.ty.name().to_string()).collect(),
            outputs: f.outputs().iter().map(|p| p.ty.name().to_string()).collect(),
            matrix: f.matrix().clone(),
        };
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    fn resolve(&self, names: &[String]) -> Result<Vec<SystemType>> {
        names.iter().map(|n| self.ty(n).cloned().ok_or_else(|| Error::UnknownLabel(n.clone()))).collect()
    }

    pub fn fragment(&self, name: &str) -> Result<OperatorFragment> {
        let e = self.get(name).ok_or_else(|| Error::UnknownLabel(name.into()))?;
        OperatorFragment::with_types(&self.resolve(&e.inputs)?, &self.resolve(&e.outputs)?, e.matrix.clone())
    }

    /// Entries `P_<name>` (preparations) and `E_<name>` (effects) for every
    /// fiducial of the family.
    pub fn from_fiducials(family: &FiducialFamily) -> Result<Self> {
        let mut lib = Self::new();
        let t = family.system();
        for (k, n) in family.names().iter().enumerate() {
            lib.insert(&format!("P_{n}"), &OperatorFragment::preparation(t, family.preparations()[k].clone())?)?;
        }
        for (k, n) in family.names().iter().enumerate() {
            lib.insert(&format!("E_{n}"), &OperatorFragment::effect(t, family.effects()[k].clone())?)?;
        }
        Ok(lib)
    }

    /// Rebuilds a fiducial family from `P_<name>` / `E_<name>` pairs on `system`.
    pub fn fiducial_family(&self, system: &str) -> Result<FiducialFamily> {
        let t = self.ty(system).cloned().ok_or_else(|| Error::UnknownLabel(system.into()))?;
        let mut names = Vec::new();
        let (mut preps, mut effects) = (Vec::new(), Vec::new());
        for e in &self.entries {
            let Some(n) = e.name.strip_prefix("P_") else { continue };
            if e.inputs.is_empty() && e.outputs == [system] {
                let eff = self.get(&format!("E_{n}")).ok_or_else(|| Error::UnknownLabel(format!("E_{n}")))?;
                names.push(n.to_string());
                preps.push(e.matrix.clone());
                effects.push(eff.matrix.clone());
            }
        }
        FiducialFamily::from_parts(t, names, preps, effects)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.types {
            writeln!(s, "type {} dim {}", t.name(), t.dim()).unwrap();
        }
        for e in &self.entries {
            writeln!(s, "entry {} : {} -> {}", e.name, fmt_types(&e.inputs), fmt_types(&e.outputs)).unwrap();
            for r in 0..e.matrix.nrows() {
                let row: Vec<String> = (0..e.matrix.ncols()).map(|c| format!("[{:?}, {:?}]", e.matrix[(r, c)].re, e.matrix[(r, c)].im)).collect();
                writeln!(s, "row {}", row.join(", ")).unwrap();
            }
            writeln!(s, "end").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lib = Self::new();
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        let as_format = |e: Error, line: usize| match e {
            Error::Syntax { msg, .. } => format_err(line, msg),
            other => other,
        };
        while let Some((ln, l)) = lines.next() {
            let mut c = Cursor::new(l, ln).map_err(|e| as_format(e, ln))?;
            match c.ident("`type` or `entry`").map_err(|e| as_format(e, ln))?.as_str() {
                "type" => {
                    let (name, dim) = (|| -> Result<_> {
                        let name = c.ident("a type name")?;
                        c.keyword("dim")?;
                        let dim = c.positive_int()?;
                        c.finish()?;
                        Ok((name, dim))
                    })()
                    .map_err(|e| as_format(e, ln))?;
                    lib.declare(&SystemType::new(name, dim)?).map_err(|e| format_err(ln, e.to_string()))?;
                }
                "entry" => {
                    let (name, inputs, outputs) = (|| -> Result<_> {
                        let name = c.ident("an entry name")?;
                        c.sym(':')?;
                        let ins = parse_types(&mut c)?;
                        c.arrow()?;
                        let outs = parse_types(&mut c)?;
                        c.finish()?;
                        Ok((name, ins, outs))
                    })()
                    .map_err(|e| as_format(e, ln))?;
                    if lib.get(&name).is_some() {
                        return Err(format_err(ln, format!("duplicate entry `{name}`")));
                    }
                    let dim: usize = lib
                        .resolve(&inputs)
                        .and_then(|a| Ok(a.into_iter().chain(lib.resolve(&outputs)?).map(|t| t.dim()).product()))
                        .map_err(|e| format_err(ln, e.to_string()))?;
                    let mut data = Vec::with_capacity(dim * dim);
                    for _ in 0..dim {
                        let (rl, row) = lines.next().ok_or_else(|| format_err(ln, format!("entry `{name}` ends early")))?;
                        let vals = parse_row(row, rl).map_err(|e| as_format(e, rl))?;
                        if vals.len() != dim {
                            return Err(format_err(rl, format!("expected {dim} entries, found {}", vals.len())));
                        }
                        data.extend(vals);
                    }
                    match lines.next() {
                        Some((_, l)) if l.trim() == "end" => {}
                        Some((el, _)) => return Err(format_err(el, format!("expected `end` after {dim} rows"))),
                        None => return Err(format_err(ln, format!("entry `{name}` has no `end`"))),
                    }
                    let matrix = CMatrix::from_row_slice(dim, dim, &data);
                    check_hermitian(&name, &matrix)?;
                    lib.entries.push(LibraryEntry { name, inputs, outputs, matrix });
                }
                other => return Err(format_err(ln, format!("unknown statement `{other}`"))),
            }
        }
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })
    }
}

fn parse_row(text: &str, line: usize) -> Result<Vec<C64>> {
    let mut c = Cursor::new(text, line)?;
    c.keyword("row")?;
    let mut out = Vec::new();
    loop {
        c.sym('[')?;
        let re = c.number()?;
        c.sym(',')?;
        let im = c.number()?;
        c.sym(']')?;
        out.push(C64::new(re, im));
        if c.peek() == Some(&Tok::Sym(',')) {
            c.sym(',')?;
        } else {
            break;
        }
    }
    c.finish()?;
    Ok(out)
}

/// Positions in the error are 1-based.
fn check_hermitian(name: &str, m: &CMatrix) -> Result<()> {
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            if (m[(r, c)] - m[(c, r)].conj()).norm() > LIBRARY_HERMITIAN_TOL {
                return Err(Error::HermiticityViolation { name: name.into(), row: r + 1, col: c + 1 });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- building

#[derive(Clone, Debug)]
pub struct OpDef {
    pub name: String,
    pub inputs: Vec<SystemType>,
    pub outputs: Vec<SystemType>,
    /// `None` for a symbolic operation with no operator attached.
    pub fragment: Option<Arc<OperatorFragment>>,
}

/// A resolved document.
#[derive(Clone, Debug)]
pub struct Circuit {
    pub types: TypeRegistry,
    pub ops: BTreeMap<String, OpDef>,
    pub graph: WireGraph,
    /// Directives with their line numbers.
    pub directives: Vec<(usize, Directive)>,
}

fn type_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Type { line, msg: msg.into() }
}

fn unresolved(line: usize, name: &str) -> Error {
    Error::UnresolvedName { line, name: name.into() }
}

fn sig(ts: &[SystemType]) -> String {
    if ts.is_empty() {
        "()".into()
    } else {
        ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
    }
}

fn role_of(ins: &[SystemType], outs: &[SystemType], call: &Call, line: usize) -> Result<Role> {
    match (ins.len(), outs.len()) {
        (0, _) => Ok(Role::Preparation),
        (_, 0) => Ok(Role::Result),
        _ => Err(type_err(line, format!("`{}` builds a preparation or a result, not a transformation", call.name))),
    }
}

struct Args<'a> {
    call: &'a Call,
    line: usize,
}

impl Args<'_> {
    fn arity(&self, n: usize) -> Result<()> {
        if self.call.args.len() != n {
            return Err(type_err(self.line, format!("`{}` takes {n} argument(s), got {}", self.call.name, self.call.args.len())));
        }
        Ok(())
    }

    fn num(&self, k: usize) -> Result<f64> {
        match &self.call.args[k] {
            Arg::Num(v) => Ok(*v),
            a => Err(type_err(self.line, format!("argument {} of `{}` should be a number, found `{a}`", k + 1, self.call.name))),
        }
    }

    fn int(&self, k: usize) -> Result<usize> {
        let v = self.num(k)?;
        if v.fract() != 0.0 || v < 1.0 {
            return Err(type_err(self.line, format!("argument {} of `{}` should be a positive integer", k + 1, self.call.name)));
        }
        Ok(v as usize)
    }

    fn ty(&self, k: usize, types: &TypeRegistry) -> Result<SystemType> {
        match &self.call.args[k] {
            Arg::Ident(n) => types.get(n).cloned().ok_or_else(|| unresolved(self.line, n)),
            a => Err(type_err(self.line, format!("argument {} of `{}` should be a type name, found `{a}`", k + 1, self.call.name))),
        }
    }

    fn string(&self, k: usize) -> Result<&str> {
        match &self.call.args[k] {
            Arg::Str(s) => Ok(s),
            a => Err(type_err(self.line, format!("argument {} of `{}` should be a string, found `{a}`", k + 1, self.call.name))),
        }
    }

    fn levels(&self, k: usize) -> Result<Vec<usize>> {
        match &self.call.args[k] {
            Arg::List(xs) if xs.iter().all(|x| x.fract() == 0.0 && *x >= 1.0) => Ok(xs.iter().map(|&x| x as usize).collect()),
            a => Err(type_err(self.line, format!("argument {} of `{}` should be a list of levels, found `{a}`", k + 1, self.call.name))),
        }
    }
}

/// Builds the raw fragment of a gadget call; the declared signature picks
/// the role of single-system states.
fn gadget(call: &Call, ins: &[SystemType], outs: &[SystemType], types: &TypeRegistry, line: usize) -> Result<OperatorFragment> {
    let a = Args { call, line };
    let engine = |e: Error| match e {
        e @ (Error::Type { .. } | Error::UnresolvedName { .. }) => e,
        e => type_err(line, format!("`{}`: {e}", call.name)),
    };
    let f = match call.name.as_str() {
        "cnot" => {
            a.arity(0)?;
            cnot_fragment()
        }
        "bloch" => {
            a.arity(3)?;
            let p = BlochPoint::new(a.num(0)?, a.num(1)?, a.num(2)?).map_err(engine)?;
            bloch_state(&p, role_of(ins, outs, call, line)?)
        }
        "equatorial" => {
            a.arity(1)?;
            equatorial_state(a.num(0)?)
        }
        "filter" => {
            a.arity(2)?;
            filter_fragment(&Subspace::levels(a.ty(0, types)?, &a.levels(1)?).map_err(engine)?)
        }
        "maxent" => {
            a.arity(0)?;
            max_entangled(role_of(ins, outs, call, line)?)
        }
        "basis" => {
            a.arity(2)?;
            basis_state(&a.ty(0, types)?, a.int(1)? - 1, role_of(ins, outs, call, line)?).map_err(engine)?
        }
        "identity" => {
            a.arity(1)?;
            OperatorFragment::identity_channel(&a.ty(0, types)?)
        }
        "deterministic" => {
            a.arity(1)?;
            deterministic_effect(&a.ty(0, types)?)
        }
        "fiducial" => {
            a.arity(2)?;
            let t = a.ty(0, types)?;
            let name = a.string(1)?;
            let (_, v) = fiducial_vectors(t.dim())
                .into_iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| type_err(line, format!("no fiducial `{name}` for {t}")))?;
            let m = CMatrix::from_fn(v.len(), v.len(), |r, c| v[r] * v[c].conj());
            match role_of(ins, outs, call, line)? {
                Role::Preparation => OperatorFragment::preparation(&t, m),
                Role::Result => OperatorFragment::effect(&t, m),
            }
            .map_err(engine)?
        }
        "scale" => {
            a.arity(2)?;
            let k = a.num(0)?;
            match &call.args[1] {
                Arg::Call(inner) => gadget(inner, ins, outs, types, line)?.scale(k),
                other => return Err(type_err(line, format!("argument 2 of `scale` should be a gadget call, found `{other}`"))),
            }
        }
        "teleport" => {
            a.arity(0)?;
            teleportation_demo().map_err(engine)?.0
        }
        "swap" => {
            a.arity(0)?;
            entanglement_swap_demo().map_err(engine)?.0
        }
        other => return Err(unresolved(line, other)),
    };
    Ok(f)
}

/// Re-types `f` to the declared signature, which must agree in dimensions.
fn conform(f: &OperatorFragment, ins: &[SystemType], outs: &[SystemType], what: &str, line: usize) -> Result<OperatorFragment> {
    let (fi, fo) = f.port_types();
    let dims = |ts: &[SystemType]| ts.iter().map(|t| t.dim()).collect::<Vec<_>>();
    if dims(&fi) != dims(ins) || dims(&fo) != dims(outs) {
        return Err(type_err(line, format!("{what} has signature {} -> {} but the op declares {} -> {}", sig(&fi), sig(&fo), sig(ins), sig(outs))));
    }
    OperatorFragment::with_types(ins, outs, f.matrix().clone())
}

fn push(diags: &mut Vec<Error>, e: Error) {
    if diags.len() < MAX_DIAGNOSTICS {
        diags.push(e);
    }
}

impl CircuitDocument {
    /// Resolves names and types. Library paths are relative to `base_dir`.
    pub fn build(&self, base_dir: &Path) -> std::result::Result<Circuit, Vec<Error>> {
        let mut diags = Vec::new();
        let mut types = TypeRegistry::new();
        let mut libs: Vec<OperatorLibrary> = Vec::new();
        let lines = || self.stmts.iter().enumerate().map(|(k, s)| (k + 1, s));
        for (line, s) in lines() {
            match s {
                Stmt::Type { name, dim } => {
                    if let Err(e) = types.declare(name, *dim) {
                        push(&mut diags, type_err(line, e.to_string()));
                    }
                }
                Stmt::Library(p) => match OperatorLibrary::load(&base_dir.join(p)) {
                    Ok(l) => libs.push(l),
                    Err(e) => push(&mut diags, e),
                },
                _ => {}
            }
        }
        let mut ops = BTreeMap::new();
        for (line, s) in lines() {
            let Stmt::Op { name, inputs, outputs, source } = s else { continue };
            let resolve = |ns: &[String]| -> Result<Vec<SystemType>> { ns.iter().map(|n| types.get(n).cloned().ok_or_else(|| unresolved(line, n))).collect() };
            let built = (|| -> Result<OpDef> {
                if ops.contains_key(name) {
                    return Err(type_err(line, format!("operator `{name}` declared twice")));
                }
                let (ins, outs) = (resolve(inputs)?, resolve(outputs)?);
                let fragment = match source {
                    None => None,
                    Some(Source::Gadget(call)) => {
                        let raw = gadget(call, &ins, &outs, &types, line)?;
                        Some(conform(&raw, &ins, &outs, &format!("`{}`", call.name), line)?)
                    }
                    Some(Source::Lib(entry)) => {
                        let lib = libs.iter().find(|l| l.get(entry).is_some()).ok_or_else(|| unresolved(line, entry))?;
                        let e = lib.get(entry).expect("found above");
                        for n in e.inputs.iter().chain(&e.outputs) {
                            let lt = lib.ty(n).expect("library types are declared");
                            if types.get(n) != Some(lt) {
                                return Err(type_err(line, format!("library type {lt} is not declared in the document")));
                            }
                        }
                        let raw = lib.fragment(entry).map_err(|e| type_err(line, e.to_string()))?;
                        Some(conform(&raw, &ins, &outs, &format!("library entry `{entry}`"), line)?)
                    }
                };
                Ok(OpDef { name: name.clone(), inputs: ins, outputs: outs, fragment: fragment.map(Arc::new) })
            })();
            match built {
                Ok(d) => {
                    ops.insert(name.clone(), d);
                }
                Err(e) => push(&mut diags, e),
            }
        }
        let mut graph = WireGraph::new();
        for (line, s) in lines() {
            let Stmt::Node { id, op } = s else { continue };
            let Some(d) = ops.get(op) else {
                push(&mut diags, unresolved(line, op));
                continue;
            };
            let node = match &d.fragment {
                Some(f) => FragmentNode::operator(id.clone(), f.clone()),
                None => FragmentNode::symbolic(id.clone(), d.inputs.clone(), d.outputs.clone()),
            };
            if let Err(e) = graph.add_node(node) {
                push(&mut diags, type_err(line, e.to_string()));
            }
        }
        let mut directives = Vec::new();
        for (line, s) in lines() {
            match s {
                Stmt::Wire { from, out_port, to, in_port } => {
                    let (Some(a), Some(b)) = (graph.node(from), graph.node(to)) else {
                        let missing = if graph.node(from).is_none() { from } else { to };
                        push(&mut diags, unresolved(line, missing));
                        continue;
                    };
                    let (Some(ta), Some(tb)) = (a.outputs.get(out_port - 1), b.inputs.get(in_port - 1)) else {
                        push(&mut diags, type_err(line, format!("wire {from}.out{out_port} -> {to}.in{in_port} names a port that does not exist")));
                        continue;
                    };
                    if ta != tb {
                        push(&mut diags, type_err(line, format!("wire {from}.out{out_port} -> {to}.in{in_port} joins {ta} to {tb}")));
                        continue;
                    }
                    graph.connect(from, *out_port, to, *in_port);
                }
                Stmt::Directive(d) => {
                    let names: Vec<&String> = match d {
                        Directive::Physical(x) => vec![x],
                        Directive::Ratio(x, y) => vec![x, y],
                        _ => vec![],
                    };
                    for n in names {
                        if !ops.contains_key(n) {
                            push(&mut diags, unresolved(line, n));
                        }
                    }
                    directives.push((line, d.clone()));
                }
                _ => {}
            }
        }
        if diags.is_empty() {
            Ok(Circuit { types, ops, graph, directives })
        } else {
            Err(diags)
        }
    }
}

// ---------------------------------------------------------------- running

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub order: ContractionOrder,
    /// Relative tolerance for `ratio`.
    pub tol: f64,
    /// Directory that `render` paths are relative to.
    pub base_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { order: ContractionOrder::Auto, tol: RATIO_TOL, base_dir: PathBuf::from(".") }
    }
}

/// Fixed-point value with twelve decimals.
pub fn format_value(v: f64) -> String {
    format!("{v:.12}")
}

/// Shortest decimal after rounding to twelve decimals, always with a point.
pub fn format_number(x: f64) -> String {
    let r = (x * 1e12).round() / 1e12;
    let r = if r == 0.0 { 0.0 } else { r };
    if r.fract() == 0.0 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

pub fn format_physicality(r: &PhysicalityReport) -> String {
    let choi = format!("min Choi eigenvalue {}", format_number(r.min_choi_eigenvalue));
    let slack = format!("trace slack {}", format_number(r.trace_condition_slack));
    if r.verdict {
        return format!("PHYSICAL ({choi}, {slack})");
    }
    let mut parts = Vec::new();
    if format_number(r.min_choi_eigenvalue).starts_with('-') {
        parts.push(choi.clone());
    }
    if format_number(r.trace_condition_slack).starts_with('-') {
        parts.push(slack.clone());
    }
    if parts.is_empty() {
        parts = vec![choi, slack];
    }
    format!("NOT PHYSICAL ({})", parts.join(", "))
}

pub fn format_ratio(r: &RatioVerdict) -> String {
    match r.ratio {
        Some(k) if r.well_conditioned => format!("well-conditioned, k = {}", format_number(k)),
        _ => "ill-conditioned".into(),
    }
}

impl Circuit {
    pub fn operator(&self, name: &str) -> Result<&Arc<OperatorFragment>> {
        let d = self.ops.get(name).ok_or_else(|| Error::UnresolvedName { line: 0, name: name.into() })?;
        d.fragment.as_ref().ok_or_else(|| Error::MissingPayload(name.into()))
    }

    pub fn eval(&self, order: ContractionOrder) -> Result<f64> {
        eval_circuit(&self.graph, order)
    }

    pub fn ratio(&self, a: &str, b: &str, tol: f64) -> Result<RatioVerdict> {
        probability_ratio(self.operator(a)?, self.operator(b)?, tol)
    }

    /// Executes one directive and returns its report line.
    pub fn execute(&self, d: &Directive, opts: &RunOptions) -> Result<String> {
        match d {
            Directive::Eval => Ok(format_value(self.eval(opts.order)?)),
            Directive::Physical(x) => Ok(format_physicality(&is_physical(self.operator(x)?)?)),
            Directive::Ratio(a, b) => Ok(format_ratio(&self.ratio(a, b, opts.tol)?)),
            Directive::Render(p) => {
                let path = opts.base_dir.join(p);
                std::fs::write(&path, emit_dot(&self.graph)).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
                Ok(format!("rendered {p}"))
            }
        }
    }

    /// Executes every directive in order, one report line each.
    pub fn run(&self, opts: &RunOptions) -> Result<Vec<String>> {
        self.directives.iter().map(|(_, d)| self.execute(d, opts)).collect()
    }
}

/// Parses, builds and runs a document in one step.
pub fn run(text: &str, opts: &RunOptions) -> std::result::Result<Vec<String>, Vec<Error>> {
    let circuit = parse(text)?.build(&opts.base_dir)?;
    circuit.run(opts).map_err(|e| vec![e])
}

// ---------------------------------------------------------------- dot

/// Pseudo-node collecting open ports; not a valid document identifier.
pub const BOUNDARY_NODE: &str = "<open>";

fn ports(prefix: &str, n: usize) -> String {
    (1..=n).map(|k| format!("<{prefix}{k}> {prefix}{k}")).collect::<Vec<_>>().join("|")
}

/// A deterministic dot digraph: one record per node (sorted ids), one edge
/// per wire labelled with its type, and one boundary point for open ports.
pub fn emit_dot(graph: &WireGraph) -> String {
    let mut s = String::from("digraph circuit {\n  rankdir=LR;\n  node [shape=record];\n");
    for n in graph.nodes() {
        let mut fields = Vec::new();
        if !n.inputs.is_empty() {
            fields.push(format!("{{{}}}", ports("in", n.inputs.len())));
        }
        fields.push(n.id.clone());
        if !n.outputs.is_empty() {
            fields.push(format!("{{{}}}", ports("out", n.outputs.len())));
        }
        writeln!(s, "  \"{}\" [label=\"{{{}}}\"];", n.id, fields.join("|")).unwrap();
    }
    let (open_in, open_out) = (graph.open_inputs(), graph.open_outputs());
    if !open_in.is_empty() || !open_out.is_empty() {
        writeln!(s, "  \"{BOUNDARY_NODE}\" [shape=point, label=\"\"];").unwrap();
    }
    let mut edges: Vec<(String, String, String, String, String)> = graph
        .wires()
        .iter()
        .filter_map(|w| {
            let ty = graph.node(&w.from.node)?.outputs.get(w.from.port - 1)?;
            Some((w.from.node.clone(), format!("out{}", w.from.port), w.to.node.clone(), format!("in{}", w.to.port), ty.name().to_string()))
        })
        .collect();
    edges.sort();
    for (a, pa, b, pb, ty) in edges {
        writeln!(s, "  \"{a}\":{pa} -> \"{b}\":{pb} [label=\"{ty}\"];").unwrap();
    }
    for (p, ty) in open_in {
        writeln!(s, "  \"{BOUNDARY_NODE}\" -> \"{}\":in{} [label=\"{}\"];", p.node, p.port, ty.name()).unwrap();
    }
    for (p, ty) in open_out {
        writeln!(s, "  \"{}\":out{} -> \"{BOUNDARY_NODE}\" [label=\"{}\"];", p.node, p.port, ty.name()).unwrap();
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duotensor::fiducial_family;

    const MINIMAL: &str = "type a dim 2\nop P : () -> a = basis(a, 1)\nop E : a -> () = deterministic(a)\nnode A uses P\nnode B uses E\nwire A.out1 -> B.in1\neval\n";

    fn build(text: &str) -> Circuit {
        parse(text).unwrap().build(Path::new(".")).unwrap()
    }

    #[test]
    fn minimal_document_evaluates() {
        let c = build(MINIMAL);
        assert_eq!(c.run(&RunOptions::default()).unwrap(), vec!["1.000000000000"]);
    }

    #[test]
    fn canonical_round_trip() {
        let doc = parse(MINIMAL).unwrap();
        assert_eq!(pretty_print(&doc), MINIMAL);
        let messy = "  type   a dim 2\n\n#note\nop X:a,a->()=scale(2,identity(a))\nwire A.out1->B.in2\nrender \"x\\\"y.dot\"\n";
        let once = pretty_print(&parse(messy).unwrap());
        assert_eq!(once, "type a dim 2\n\n# note\nop X : a, a -> () = scale(2, identity(a))\nwire A.out1 -> B.in2\nrender \"x\\\"y.dot\"\n");
        assert_eq!(pretty_print(&parse(&once).unwrap()), once);
    }

    #[test]
    fn diagnostics_carry_positions_and_accumulate() {
        let errs = parse("type a dim 2\ntype b dim\nwire A.out1 B.in1\nfoo\n").unwrap_err();
        assert_eq!(errs.len(), 3);
        assert!(matches!(errs[0], Error::Syntax { line: 2, col: 11, .. }));
        assert!(matches!(errs[1], Error::Syntax { line: 3, col: 13, .. }));
        assert!(matches!(errs[2], Error::Syntax { line: 4, col: 1, .. }));
        let many: String = (0..30).map(|_| "bogus\n").collect();
        assert_eq!(parse(&many).unwrap_err().len(), MAX_DIAGNOSTICS);
    }

    #[test]
    fn mismatched_wire_is_a_type_error_on_its_line() {
        let text = "type a dim 2\ntype b dim 2\nop P : () -> a = basis(a, 1)\nop E : b -> () = deterministic(b)\nnode A uses P\nnode B uses E\nwire A.out1 -> B.in1\n";
        let errs = parse(text).unwrap().build(Path::new(".")).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(matches!(errs[0], Error::Type { line: 7, .. }));
    }

    #[test]
    fn unresolved_names_are_reported() {
        let text = "type a dim 2\nop P : () -> c = basis(a, 1)\nnode A uses Q\nphysical Z\n";
        let errs = parse(text).unwrap().build(Path::new(".")).unwrap_err();
        let names: Vec<_> = errs
            .iter()
            .map(|e| match e {
                Error::UnresolvedName { line, name } => (*line, name.as_str()),
                other => panic!("{other}"),
            })
            .collect();
        assert_eq!(names, vec![(2, "c"), (3, "Q"), (4, "Z")]);
    }

    #[test]
    fn gadget_signature_is_checked() {
        let errs = parse("type a dim 3\nop C : a, a -> a, a = cnot()\n").unwrap().build(Path::new(".")).unwrap_err();
        assert!(matches!(errs[0], Error::Type { line: 2, .. }));
    }

    #[test]
    fn physicality_lines() {
        let c = build("type a dim 2\nop I2 : a -> a = scale(2, identity(a))\nop I : a -> a = identity(a)\nphysical I2\nphysical I\n");
        let out = c.run(&RunOptions::default()).unwrap();
        assert_eq!(out[0], "NOT PHYSICAL (trace slack -1.0)");
        assert_eq!(out[1], "PHYSICAL (min Choi eigenvalue 0.0, trace slack 0.0)");
    }

    #[test]
    fn ratio_of_teleport_to_identity() {
        let c = build("type q dim 2\nop T : q -> q = teleport()\nop I : q -> q = identity(q)\nratio T I\n");
        assert_eq!(c.run(&RunOptions::default()).unwrap(), vec!["well-conditioned, k = 0.125"]);
    }

    #[test]
    fn dot_for_a_chain() {
        let c = build(MINIMAL);
        let dot = emit_dot(&c.graph);
        assert_eq!(dot.matches("[label=\"{").count(), 2);
        assert_eq!(dot.matches(" -> ").count(), 1);
        assert!(dot.contains("\"A\":out1 -> \"B\":in1 [label=\"a\"];"));
        assert_eq!(dot, emit_dot(&build(MINIMAL).graph));
    }

    #[test]
    fn teleport_graph_dot_counts() {
        let dot = emit_dot(&crate::gadgets::teleportation_graph(0.0));
        let nodes = dot.lines().filter(|l| l.starts_with("  \"") && !l.contains(" -> ")).count();
        let edges: Vec<_> = dot.lines().filter(|l| l.contains(" -> ")).collect();
        assert_eq!(nodes, 6);
        assert_eq!(edges.len(), 6);
        assert!(edges.iter().all(|e| e.ends_with("[label=\"qubit\"];")));
    }

    #[test]
    fn library_round_trip_is_exact() {
        let q = SystemType::new("q", 2).unwrap();
        let mut lib = OperatorLibrary::new();
        for k in 0..2 {
            lib.insert(&format!("U{}", k + 1), &basis_state(&q, k, Role::Result).unwrap()).unwrap();
        }
        let odd = CMatrix::from_row_slice(2, 2, &[C64::new(0.1, 0.0), C64::new(1.0 / 3.0, -1e-17), C64::new(1.0 / 3.0, 1e-17), C64::new(-0.0, 0.0)]);
        lib.insert("odd", &OperatorFragment::preparation(&q, odd).unwrap()).unwrap();
        let text = lib.to_text();
        let back = OperatorLibrary::from_text(&text).unwrap();
        assert_eq!(back, lib);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn non_hermitian_entry_is_named() {
        let text = "type q dim 2\nentry bad : () -> q\nrow [1.0, 0.0], [0.5, 0.0]\nrow [0.0, 0.0], [0.0, 0.0]\nend\n";
        match OperatorLibrary::from_text(text) {
            Err(Error::HermiticityViolation { name, row, col }) => assert_eq!((name.as_str(), row, col), ("bad", 1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_library_reports_line() {
        let text = "type q dim 2\nentry e : () -> q\nrow [1.0, 0.0]\nrow [0.0, 0.0], [0.0, 0.0]\nend\n";
        assert!(matches!(OperatorLibrary::from_text(text), Err(Error::Format { line: 3, .. })));
    }

    #[test]
    fn library_fiducials_regenerate_the_metric() {
        let fam = fiducial_family(3).unwrap();
        let lib = OperatorLibrary::from_fiducials(&fam).unwrap();
        let back = OperatorLibrary::from_text(&lib.to_text()).unwrap().fiducial_family("d3").unwrap();
        assert_eq!(back.names(), fam.names());
        assert!((back.g() - fam.g()).abs().max() <= 1e-12);
    }

    #[test]
    fn numbers_format_compactly() {
        assert_eq!(format_number(-1.0), "-1.0");
        assert_eq!(format_number(0.125000000000001), "0.125");
        assert_eq!(format_number(-1e-17), "0.0");
        assert_eq!(format_value(0.125), "0.125000000000");
    }
}
