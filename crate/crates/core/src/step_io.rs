//! Restricted ISO 10303-21 (STEP) reader and writer for kernel solids, and
//! the per-face label sidecar.
//!
//! Entity numbering is depth-first from the face list with children written
//! before their parents, so a solid always produces the same text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::brep::{CurveKind, Edge, Face, Loop, OrientedEdge, Solid, SurfaceKind};
use crate::geom::Vec3;

pub const SUPPORTED_ENTITIES: [&str; 17] = [
    "CARTESIAN_POINT",
    "DIRECTION",
    "VECTOR",
    "AXIS2_PLACEMENT_3D",
    "PLANE",
    "CYLINDRICAL_SURFACE",
    "LINE",
    "CIRCLE",
    "VERTEX_POINT",
    "EDGE_CURVE",
    "ORIENTED_EDGE",
    "EDGE_LOOP",
    "FACE_BOUND",
    "FACE_OUTER_BOUND",
    "ADVANCED_FACE",
    "CLOSED_SHELL",
    "MANIFOLD_SOLID_BREP",
];

pub const LABEL_HEADER: &str = "face_id,class_index,instance_id";

/// Largest class index a label row may carry.
pub const MAX_CLASS_INDEX: u8 = 29;

const MAX_NESTING: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsupported entity #{id} ({keyword})")]
    UnsupportedEntity { id: u64, keyword: String },
    #[error("entity #{from} references missing entity #{missing}")]
    DanglingReference { from: u64, missing: u64 },
    #[error("reference cycle through entity #{id}")]
    ReferenceCycle { id: u64 },
    #[error("duplicate entity id #{id}")]
    DuplicateId { id: u64 },
    #[error("entity #{id}: {msg}")]
    Invalid { id: u64, msg: String },
    #[error("invalid solid: {0}")]
    Structure(String),
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("label sidecar line {line}: {msg}")]
    Label { line: usize, msg: String },
}

/// Output of [`write_step`]: the file text and the entity id of every face.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDocument {
    pub text: String,
    pub face_ids: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRow {
    pub face_id: u64,
    pub class_index: u8,
    pub instance_id: u32,
}

// ---------------------------------------------------------------- writer

fn real(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16E}")
}

fn flag(b: bool) -> &'static str {
    if b {
        ".T."
    } else {
        ".F."
    }
}

struct Writer {
    body: String,
    next: u64,
    vertex_ids: HashMap<usize, u64>,
    edge_ids: HashMap<usize, u64>,
}

impl Writer {
    fn emit(&mut self, entity: String) -> u64 {
        let id = self.next;
        self.next += 1;
        let _ = writeln!(self.body, "#{id}={entity};");
        id
    }

    fn point(&mut self, p: Vec3) -> u64 {
        self.emit(format!("CARTESIAN_POINT('',({},{},{}))", real(p.x), real(p.y), real(p.z)))
    }

    fn direction(&mut self, d: Vec3) -> u64 {
        self.emit(format!("DIRECTION('',({},{},{}))", real(d.x), real(d.y), real(d.z)))
    }

    fn placement(&mut self, o: Vec3, axis: Vec3, refd: Vec3) -> u64 {
        let p = self.point(o);
        let a = self.direction(axis);
        let r = self.direction(refd);
        self.emit(format!("AXIS2_PLACEMENT_3D('',#{p},#{a},#{r})"))
    }

    fn vertex(&mut self, s: &Solid, v: usize) -> u64 {
        if let Some(&id) = self.vertex_ids.get(&v) {
            return id;
        }
        let p = self.point(s.vertices[v]);
        let id = self.emit(format!("VERTEX_POINT('',#{p})"));
        self.vertex_ids.insert(v, id);
        id
    }

    fn edge(&mut self, s: &Solid, e: usize) -> u64 {
        if let Some(&id) = self.edge_ids.get(&e) {
            return id;
        }
        let edge = s.edges[e];
        let v1 = self.vertex(s, edge.start);
        let v2 = self.vertex(s, edge.end);
        let curve = match edge.curve {
            CurveKind::Line { point, direction } => {
                let p = self.point(point);
                let d = self.direction(direction);
                let vec = self.emit(format!("VECTOR('',#{d},{})", real(1.0)));
                self.emit(format!("LINE('',#{p},#{vec})"))
            }
            CurveKind::CircleArc { center, axis, ref_dir, radius } => {
                let ax = self.placement(center, axis, ref_dir);
                self.emit(format!("CIRCLE('',#{ax},{})", real(radius)))
            }
        };
        let id = self.emit(format!("EDGE_CURVE('',#{v1},#{v2},#{curve},.T.)"));
        self.edge_ids.insert(e, id);
        id
    }

    fn face_loop(&mut self, s: &Solid, l: &Loop, outer: bool) -> u64 {
        let mut oes = Vec::with_capacity(l.edges.len());
        for oe in &l.edges {
            let ec = self.edge(s, oe.edge);
            oes.push(self.emit(format!("ORIENTED_EDGE('',*,*,#{ec},{})", flag(oe.forward))));
        }
        let list = oes.iter().map(|i| format!("#{i}")).collect::<Vec<_>>().join(",");
        let lp = self.emit(format!("EDGE_LOOP('',({list}))"));
        let kw = if outer { "FACE_OUTER_BOUND" } else { "FACE_BOUND" };
        self.emit(format!("{kw}('',#{lp},.T.)"))
    }
}

/// Serializes a solid. Output is a pure function of the solid's topology
/// and geometry.
pub fn write_step(solid: &Solid) -> StepDocument {
    let mut w = Writer { body: String::new(), next: 1, vertex_ids: HashMap::new(), edge_ids: HashMap::new() };
    let mut face_ids = Vec::with_capacity(solid.faces.len());
    for face in &solid.faces {
        let surf = match face.surface {
            SurfaceKind::Plane { origin, normal, ref_dir } => {
                let ax = w.placement(origin, normal, ref_dir);
                w.emit(format!("PLANE('',#{ax})"))
            }
            SurfaceKind::Cylinder { axis_origin, axis_dir, ref_dir, radius } => {
                let ax = w.placement(axis_origin, axis_dir, ref_dir);
                w.emit(format!("CYLINDRICAL_SURFACE('',#{ax},{})", real(radius)))
            }
        };
        let mut bounds = vec![w.face_loop(solid, &face.outer, true)];
        for l in &face.inners {
            bounds.push(w.face_loop(solid, l, false));
        }
        let list = bounds.iter().map(|i| format!("#{i}")).collect::<Vec<_>>().join(",");
        face_ids.push(w.emit(format!("ADVANCED_FACE('',({list}),#{surf},{})", flag(face.same_sense))));
    }
    let list = face_ids.iter().map(|i| format!("#{i}")).collect::<Vec<_>>().join(",");
    let shell = w.emit(format!("CLOSED_SHELL('',({list}))"));
    w.emit(format!("MANIFOLD_SOLID_BREP('',#{shell})"));

    let mut text = String::with_capacity(w.body.len() + 512);
    text.push_str("ISO-10303-21;\nHEADER;\n");
    text.push_str("FILE_DESCRIPTION(('hybrid feature model'),'2;1');\n");
    text.push_str("FILE_NAME('model','1970-01-01T00:00:00',(''),(''),'hfr','hfr','');\n");
    text.push_str("FILE_SCHEMA(('AUTOMOTIVE_DESIGN'));\n");
    text.push_str("ENDSEC;\nDATA;\n");
    text.push_str(&w.body);
    text.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
    StepDocument { text, face_ids }
}

/// Label sidecar text: header plus one row per face, in face order.
pub fn write_labels(face_ids: &[u64], labels: &[(u8, u32)]) -> String {
    let mut s = String::from(LABEL_HEADER);
    s.push('\n');
    for (id, (c, i)) in face_ids.iter().zip(labels) {
        let _ = writeln!(s, "{id},{c},{i}");
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelRow>, StepError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == LABEL_HEADER => {}
        _ => return Err(StepError::Label { line: 1, msg: format!("expected header `{LABEL_HEADER}`") }),
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let parts: Vec<&str> = l.trim().split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(StepError::Label { line, msg: "expected three fields".into() });
        }
        let bad = |what: &str| StepError::Label { line, msg: format!("invalid {what}") };
        let face_id = parts[0].parse().map_err(|_| bad("face_id"))?;
        let class_index: u8 = parts[1].parse().map_err(|_| bad("class_index"))?;
        if class_index > MAX_CLASS_INDEX {
            return Err(StepError::Label { line, msg: format!("class_index {class_index} out of range") });
        }
        let instance_id = parts[2].parse().map_err(|_| bad("instance_id"))?;
        rows.push(LabelRow { face_id, class_index, instance_id });
    }
    Ok(rows)
}

/// Joins sidecar rows onto faces; every face must appear exactly once.
pub fn join_labels(face_ids: &[u64], rows: &[LabelRow]) -> Result<Vec<(u8, u32)>, StepError> {
    let mut by_id: HashMap<u64, (u8, u32)> = HashMap::new();
    for (k, r) in rows.iter().enumerate() {
        if by_id.insert(r.face_id, (r.class_index, r.instance_id)).is_some() {
            return Err(StepError::Label { line: k + 2, msg: format!("face #{} labeled twice", r.face_id) });
        }
    }
    if by_id.len() != face_ids.len() {
        return Err(StepError::Label { line: 0, msg: format!("{} rows for {} faces", by_id.len(), face_ids.len()) });
    }
    face_ids
        .iter()
        .map(|id| by_id.get(id).copied().ok_or(StepError::Label { line: 0, msg: format!("face #{id} has no label") }))
        .collect()
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ref(u64),
    Real(f64),
    Int(i64),
    Str(String),
    Enum(String),
    Keyword(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Eq,
    Dollar,
    Star,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, msg: impl Into<String>) -> StepError {
        StepError::Syntax { line: self.line, col: self.col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) -> Result<(), StepError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'*') => {
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            None => return Err(self.err("unterminated comment")),
                            Some(b'*') if self.peek() == Some(b'/') => {
                                self.bump();
                                break;
                            }
                            _ => {}
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// Next token with the position where it starts.
    fn next(&mut self) -> Result<Option<(Tok, usize, usize)>, StepError> {
        self.skip_ws()?;
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else { return Ok(None) };
        let tok = match c {
            b'(' | b')' | b',' | b';' | b'=' | b'$' | b'*' => {
                self.bump();
                match c {
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    b',' => Tok::Comma,
                    b';' => Tok::Semi,
                    b'=' => Tok::Eq,
                    b'$' => Tok::Dollar,
                    _ => Tok::Star,
                }
            }
            b'#' => {
                self.bump();
                let s = self.take_while(|c| c.is_ascii_digit());
                if s.is_empty() {
                    return Err(self.err("expected digits after '#'"));
                }
                Tok::Ref(s.parse().map_err(|_| self.err("entity id out of range"))?)
            }
            b'\'' => {
                self.bump();
                let mut out = Vec::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated string")),
                        Some(b'\'') if self.peek() == Some(b'\'') => {
                            self.bump();
                            out.push(b'\'');
                        }
                        Some(b'\'') => break,
                        Some(c) => out.push(c),
                    }
                }
                Tok::Str(String::from_utf8_lossy(&out).into_owned())
            }
            b'.' => {
                self.bump();
                let s = self.take_while(|c| c.is_ascii_alphanumeric() || c == b'_');
                if s.is_empty() || self.bump() != Some(b'.') {
                    return Err(self.err("malformed enumeration"));
                }
                Tok::Enum(s)
            }
            b'+' | b'-' | b'0'..=b'9' => {
                let s = self.take_while(|c| c.is_ascii_digit() || matches!(c, b'+' | b'-' | b'.' | b'E' | b'e'));
                if s.contains(['.', 'E', 'e']) {
                    let fixed = s.replace(".E", ".0E").replace(".e", ".0e");
                    let fixed = if fixed.ends_with('.') { format!("{fixed}0") } else { fixed };
                    Tok::Real(fixed.parse().map_err(|_| self.err(format!("malformed real `{s}`")))?)
                } else {
                    Tok::Int(s.parse().map_err(|_| self.err(format!("malformed integer `{s}`")))?)
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let s = self.take_while(|c| c.is_ascii_alphanumeric() || c == b'_' || c == b'-');
                Tok::Keyword(s.to_ascii_uppercase())
            }
            _ => return Err(self.err(format!("unexpected character {:?}", c as char))),
        };
        Ok(Some((tok, line, col)))
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> String {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }
}

// ---------------------------------------------------------------- parser

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Ref(u64),
    Real(f64),
    Int(i64),
    Str(String),
    Enum(String),
    List(Vec<Arg>),
    Null,
    Derived,
    Typed(String, Vec<Arg>),
}

#[derive(Debug, Clone)]
struct Entity {
    keyword: String,
    args: Vec<Arg>,
}

struct Parser<'a> {
    lex: Lexer<'a>,
    peeked: Option<(Tok, usize, usize)>,
    last: (usize, usize),
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { lex: Lexer { src: text.as_bytes(), pos: 0, line: 1, col: 1 }, peeked: None, last: (1, 1) }
    }

    fn next(&mut self) -> Result<Option<Tok>, StepError> {
        let t = match self.peeked.take() {
            Some(t) => Some(t),
            None => self.lex.next()?,
        };
        Ok(t.map(|(tok, l, c)| {
            self.last = (l, c);
            tok
        }))
    }

    fn peek(&mut self) -> Result<Option<&Tok>, StepError> {
        if self.peeked.is_none() {
            self.peeked = self.lex.next()?;
        }
        Ok(self.peeked.as_ref().map(|(t, _, _)| t))
    }

    fn err(&self, msg: impl Into<String>) -> StepError {
        StepError::Syntax { line: self.last.0, col: self.last.1, msg: msg.into() }
    }

    fn expect(&mut self, want: Tok) -> Result<(), StepError> {
        match self.next()? {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(self.err(format!("expected {want:?}, found {t:?}"))),
            None => Err(self.err(format!("expected {want:?}, found end of input"))),
        }
    }

    fn keyword(&mut self, want: &str) -> Result<(), StepError> {
        match self.next()? {
            Some(Tok::Keyword(k)) if k == want => Ok(()),
            other => Err(self.err(format!("expected {want}, found {other:?}"))),
        }
    }

    /// Parenthesized argument list; the opening parenthesis is consumed.
    fn args(&mut self, depth: usize) -> Result<Vec<Arg>, StepError> {
        if depth > MAX_NESTING {
            return Err(self.err("lists nested too deeply"));
        }
        let mut out = Vec::new();
        if self.peek()? == Some(&Tok::RParen) {
            self.next()?;
            return Ok(out);
        }
        loop {
            let a = match self.next()? {
                Some(Tok::Ref(r)) => Arg::Ref(r),
                Some(Tok::Real(x)) => Arg::Real(x),
                Some(Tok::Int(i)) => Arg::Int(i),
                Some(Tok::Str(s)) => Arg::Str(s),
                Some(Tok::Enum(e)) => Arg::Enum(e),
                Some(Tok::Dollar) => Arg::Null,
                Some(Tok::Star) => Arg::Derived,
                Some(Tok::LParen) => Arg::List(self.args(depth + 1)?),
                Some(Tok::Keyword(k)) => {
                    self.expect(Tok::LParen)?;
                    Arg::Typed(k, self.args(depth + 1)?)
                }
                other => return Err(self.err(format!("unexpected {other:?} in argument list"))),
            };
            out.push(a);
            match self.next()? {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => return Ok(out),
                other => return Err(self.err(format!("expected ',' or ')', found {other:?}"))),
            }
        }
    }

    fn header(&mut self) -> Result<(), StepError> {
        self.keyword("ISO-10303-21")?;
        self.expect(Tok::Semi)?;
        self.keyword("HEADER")?;
        self.expect(Tok::Semi)?;
        loop {
            match self.next()? {
                Some(Tok::Keyword(k)) if k == "ENDSEC" => {
                    self.expect(Tok::Semi)?;
                    return Ok(());
                }
                Some(Tok::Keyword(_)) => {
                    self.expect(Tok::LParen)?;
                    self.args(0)?;
                    self.expect(Tok::Semi)?;
                }
                other => return Err(self.err(format!("unexpected {other:?} in header"))),
            }
        }
    }

    fn data(&mut self) -> Result<BTreeMap<u64, Entity>, StepError> {
        self.keyword("DATA")?;
        self.expect(Tok::Semi)?;
        let mut ents = BTreeMap::new();
        loop {
            match self.next()? {
                Some(Tok::Keyword(k)) if k == "ENDSEC" => {
                    self.expect(Tok::Semi)?;
                    break;
                }
                Some(Tok::Ref(id)) => {
                    self.expect(Tok::Eq)?;
                    let ent = match self.next()? {
                        Some(Tok::Keyword(k)) => {
                            self.expect(Tok::LParen)?;
                            Entity { keyword: k, args: self.args(0)? }
                        }
                        Some(Tok::LParen) => {
                            self.args(0)?;
                            Entity { keyword: "(complex)".into(), args: Vec::new() }
                        }
                        other => return Err(self.err(format!("expected entity keyword, found {other:?}"))),
                    };
                    self.expect(Tok::Semi)?;
                    if ents.insert(id, ent).is_some() {
                        return Err(StepError::DuplicateId { id });
                    }
                }
                other => return Err(self.err(format!("expected entity instance, found {other:?}"))),
            }
        }
        self.keyword("END-ISO-10303-21")?;
        self.expect(Tok::Semi)?;
        if let Some(t) = self.next()? {
            return Err(self.err(format!("trailing content {t:?}")));
        }
        Ok(ents)
    }
}

fn refs_of(args: &[Arg], out: &mut Vec<u64>) {
    for a in args {
        match a {
            Arg::Ref(r) => out.push(*r),
            Arg::List(l) | Arg::Typed(_, l) => refs_of(l, out),
            _ => {}
        }
    }
}

fn check_graph(ents: &BTreeMap<u64, Entity>) -> Result<(), StepError> {
    for (&id, e) in ents {
        if !SUPPORTED_ENTITIES.contains(&e.keyword.as_str()) {
            return Err(StepError::UnsupportedEntity { id, keyword: e.keyword.clone() });
        }
    }
    let mut children: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (&id, e) in ents {
        let mut r = Vec::new();
        refs_of(&e.args, &mut r);
        for &m in &r {
            if !ents.contains_key(&m) {
                return Err(StepError::DanglingReference { from: id, missing: m });
            }
        }
        children.insert(id, r);
    }
    // Iterative three-colour depth-first search.
    let mut state: HashMap<u64, u8> = HashMap::new();
    for &root in ents.keys() {
        if state.contains_key(&root) {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state.insert(root, 1);
        while let Some((node, k)) = stack.pop() {
            let ch = &children[&node];
            if k < ch.len() {
                stack.push((node, k + 1));
                let c = ch[k];
                match state.get(&c) {
                    Some(1) => return Err(StepError::ReferenceCycle { id: c }),
                    Some(_) => {}
                    None => {
                        state.insert(c, 1);
                        stack.push((c, 0));
                    }
                }
            } else {
                state.insert(node, 2);
            }
        }
    }
    Ok(())
}

struct Resolver<'a> {
    ents: &'a BTreeMap<u64, Entity>,
    vertices: Vec<Vec3>,
    vertex_of: HashMap<u64, usize>,
    edges: Vec<Edge>,
    edge_of: HashMap<u64, usize>,
}

impl<'a> Resolver<'a> {
    fn get(&self, id: u64, kw: &[&str]) -> Result<&'a Entity, StepError> {
        let e = self.ents.get(&id).ok_or(StepError::DanglingReference { from: 0, missing: id })?;
        if !kw.contains(&e.keyword.as_str()) {
            return Err(StepError::Invalid { id, msg: format!("expected {}, found {}", kw.join(" or "), e.keyword) });
        }
        Ok(e)
    }

    fn arg(id: u64, e: &Entity, k: usize) -> Result<&Arg, StepError> {
        e.args.get(k).ok_or_else(|| StepError::Invalid { id, msg: format!("missing argument {k}") })
    }

    fn reference(id: u64, e: &Entity, k: usize) -> Result<u64, StepError> {
        match Self::arg(id, e, k)? {
            Arg::Ref(r) => Ok(*r),
            _ => Err(StepError::Invalid { id, msg: format!("argument {k} must be a reference") }),
        }
    }

    fn number(id: u64, e: &Entity, k: usize) -> Result<f64, StepError> {
        let x = match Self::arg(id, e, k)? {
            Arg::Real(x) => *x,
            Arg::Int(i) => *i as f64,
            _ => return Err(StepError::Invalid { id, msg: format!("argument {k} must be a number") }),
        };
        if x.is_finite() {
            Ok(x)
        } else {
            Err(StepError::Invalid { id, msg: format!("argument {k} is not finite") })
        }
    }

    fn boolean(id: u64, e: &Entity, k: usize) -> Result<bool, StepError> {
        match Self::arg(id, e, k)? {
            Arg::Enum(s) if s == "T" => Ok(true),
            Arg::Enum(s) if s == "F" => Ok(false),
            _ => Err(StepError::Invalid { id, msg: format!("argument {k} must be .T. or .F.") }),
        }
    }

    fn ref_list(id: u64, e: &Entity, k: usize) -> Result<Vec<u64>, StepError> {
        match Self::arg(id, e, k)? {
            Arg::List(l) => l
                .iter()
                .map(|a| match a {
                    Arg::Ref(r) => Ok(*r),
                    _ => Err(StepError::Invalid { id, msg: format!("argument {k} must list references") }),
                })
                .collect(),
            _ => Err(StepError::Invalid { id, msg: format!("argument {k} must be a list") }),
        }
    }

    fn triple(&self, id: u64, kw: &str) -> Result<Vec3, StepError> {
        let e = self.get(id, &[kw])?;
        match Self::arg(id, e, 1)? {
            Arg::List(l) if l.len() == 3 => {
                let mut v = [0.0; 3];
                for (k, a) in l.iter().enumerate() {
                    v[k] = match a {
                        Arg::Real(x) if x.is_finite() => *x,
                        Arg::Int(i) => *i as f64,
                        _ => return Err(StepError::Invalid { id, msg: "coordinates must be finite numbers".into() }),
                    };
                }
                Ok(Vec3::from_array(v))
            }
            _ => Err(StepError::Invalid { id, msg: "expected three coordinates".into() }),
        }
    }

    fn point(&self, id: u64) -> Result<Vec3, StepError> {
        self.triple(id, "CARTESIAN_POINT")
    }

    fn direction(&self, id: u64) -> Result<Vec3, StepError> {
        let d = self.triple(id, "DIRECTION")?;
        let n = d.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(StepError::Invalid { id, msg: "zero direction".into() });
        }
        Ok(if (n - 1.0).abs() <= 1e-15 { d } else { d / n })
    }

    fn placement(&self, id: u64) -> Result<(Vec3, Vec3, Vec3), StepError> {
        let e = self.get(id, &["AXIS2_PLACEMENT_3D"])?;
        let o = self.point(Self::reference(id, e, 1)?)?;
        let axis = match Self::arg(id, e, 2)? {
            Arg::Null => Vec3::Z,
            _ => self.direction(Self::reference(id, e, 2)?)?,
        };
        let refd = match Self::arg(id, e, 3)? {
            Arg::Null => axis.any_perpendicular(),
            _ => self.direction(Self::reference(id, e, 3)?)?,
        };
        if axis.dot(refd).abs() > 1e-9 {
            return Err(StepError::Invalid { id, msg: "reference direction not perpendicular to axis".into() });
        }
        Ok((o, axis, refd))
    }

    fn vertex(&mut self, id: u64) -> Result<usize, StepError> {
        if let Some(&v) = self.vertex_of.get(&id) {
            return Ok(v);
        }
        let e = self.get(id, &["VERTEX_POINT"])?;
        let p = self.point(Self::reference(id, e, 1)?)?;
        self.vertices.push(p);
        self.vertex_of.insert(id, self.vertices.len() - 1);
        Ok(self.vertices.len() - 1)
    }

    fn edge(&mut self, id: u64) -> Result<usize, StepError> {
        if let Some(&x) = self.edge_of.get(&id) {
            return Ok(x);
        }
        let e = self.get(id, &["EDGE_CURVE"])?;
        let start = self.vertex(Self::reference(id, e, 1)?)?;
        let end = self.vertex(Self::reference(id, e, 2)?)?;
        let cid = Self::reference(id, e, 3)?;
        let sense = Self::boolean(id, e, 4)?;
        let c = self.get(cid, &["LINE", "CIRCLE"])?;
        let curve = if c.keyword == "LINE" {
            let point = self.point(Self::reference(cid, c, 1)?)?;
            let vid = Self::reference(cid, c, 2)?;
            let v = self.get(vid, &["VECTOR"])?;
            let mut direction = self.direction(Self::reference(vid, v, 1)?)?;
            if !sense {
                direction = -direction;
            }
            CurveKind::Line { point, direction }
        } else {
            let (center, mut axis, ref_dir) = self.placement(Self::reference(cid, c, 1)?)?;
            let radius = Self::number(cid, c, 2)?;
            if !(radius > 0.0) {
                return Err(StepError::Invalid { id: cid, msg: "radius must be positive".into() });
            }
            if !sense {
                axis = -axis;
            }
            CurveKind::CircleArc { center, axis, ref_dir, radius }
        };
        if start == end && matches!(curve, CurveKind::Line { .. }) {
            return Err(StepError::Invalid { id, msg: "closed straight edge".into() });
        }
        self.edges.push(Edge { curve, start, end });
        self.edge_of.insert(id, self.edges.len() - 1);
        Ok(self.edges.len() - 1)
    }

    fn bound(&mut self, id: u64) -> Result<(Loop, bool), StepError> {
        let b = self.get(id, &["FACE_BOUND", "FACE_OUTER_BOUND"])?;
        let outer = b.keyword == "FACE_OUTER_BOUND";
        let lid = Self::reference(id, b, 1)?;
        let orient = Self::boolean(id, b, 2)?;
        let l = self.get(lid, &["EDGE_LOOP"])?;
        let mut edges = Vec::new();
        for oid in Self::ref_list(lid, l, 1)? {
            let o = self.get(oid, &["ORIENTED_EDGE"])?;
            let edge = self.edge(Self::reference(oid, o, 3)?)?;
            let forward = Self::boolean(oid, o, 4)?;
            edges.push(OrientedEdge { edge, forward });
        }
        if edges.is_empty() {
            return Err(StepError::Invalid { id: lid, msg: "empty edge loop".into() });
        }
        if !orient {
            edges.reverse();
            for e in &mut edges {
                e.forward = !e.forward;
            }
        }
        Ok((Loop { edges }, outer))
    }

    fn face(&mut self, id: u64) -> Result<Face, StepError> {
        let f = self.get(id, &["ADVANCED_FACE"])?;
        let bounds = Self::ref_list(id, f, 1)?;
        let sid = Self::reference(id, f, 2)?;
        let same_sense = Self::boolean(id, f, 3)?;
        let s = self.get(sid, &["PLANE", "CYLINDRICAL_SURFACE"])?;
        let (o, axis, refd) = self.placement(Self::reference(sid, s, 1)?)?;
        let surface = if s.keyword == "PLANE" {
            SurfaceKind::Plane { origin: o, normal: axis, ref_dir: refd }
        } else {
            let radius = Self::number(sid, s, 2)?;
            if !(radius > 0.0) {
                return Err(StepError::Invalid { id: sid, msg: "radius must be positive".into() });
            }
            SurfaceKind::Cylinder { axis_origin: o, axis_dir: axis, ref_dir: refd, radius }
        };
        let mut loops = Vec::new();
        for b in bounds {
            loops.push(self.bound(b)?);
        }
        let oi = loops.iter().position(|(_, outer)| *outer).unwrap_or(0);
        if loops.is_empty() {
            return Err(StepError::Invalid { id, msg: "face without bounds".into() });
        }
        let (outer, _) = loops.remove(oi);
        Ok(Face { surface, same_sense, outer, inners: loops.into_iter().map(|(l, _)| l).collect(), tag: None })
    }
}

/// Parses a STEP document, returning the solid and the entity id of each of
/// its faces (in face order).
pub fn parse_step_with_ids(text: &str) -> Result<(Solid, Vec<u64>), StepError> {
    let mut p = Parser::new(text);
    p.header()?;
    let ents = p.data()?;
    check_graph(&ents)?;
    let roots: Vec<u64> = ents.iter().filter(|(_, e)| e.keyword == "MANIFOLD_SOLID_BREP").map(|(&i, _)| i).collect();
    let [root] = roots[..] else {
        return Err(StepError::Structure(format!("expected one MANIFOLD_SOLID_BREP, found {}", roots.len())));
    };
    let mut r = Resolver { ents: &ents, vertices: Vec::new(), vertex_of: HashMap::new(), edges: Vec::new(), edge_of: HashMap::new() };
    let b = r.get(root, &["MANIFOLD_SOLID_BREP"])?;
    let shell_id = Resolver::reference(root, b, 1)?;
    let shell = r.get(shell_id, &["CLOSED_SHELL"])?;
    let face_ids = Resolver::ref_list(shell_id, shell, 1)?;
    let mut faces = Vec::with_capacity(face_ids.len());
    for &f in &face_ids {
        faces.push(r.face(f)?);
    }
    let solid = Solid::from_parts(r.vertices, r.edges, faces);
    solid.validate().map_err(|e| StepError::Structure(e.to_string()))?;
    Ok((solid, face_ids))
}

pub fn parse_step(text: &str) -> Result<Solid, StepError> {
    parse_step_with_ids(text).map(|(s, _)| s)
}
