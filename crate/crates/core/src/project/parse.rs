//! Lexer and recursive-descent parser for project files.

use std::collections::{BTreeSet, HashMap};

use crate::graph::{is_stem, FiniteGraph, Ident, Rank, StandardGraph, StandardNode, Template};
use crate::index_set::IndexSet;
use crate::oracle::Membership;
use crate::seq::{generators, Numeric, SeqDescriptor, SeqValue, Traits};
use crate::ultrapower::ExtremitySeq;

use super::{ExtremityDecl, FamilyDecl, NetworkDecl, OracleConfig, Project, ProjectError, Query};

/// Largest `nmax` accepted for generated descriptors.
const MAX_NMAX: u64 = 1 << 20;
/// Largest template window.
const MAX_WINDOW: u64 = 64;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
    Newline,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &[char] = &['{', '}', '[', ']', '(', ')', ',', '='];

fn lex(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut c = 0;
        while c < chars.len() {
            let ch = chars[c];
            if ch == '#' {
                break;
            }
            if ch.is_whitespace() {
                c += 1;
                continue;
            }
            if PUNCT.contains(&ch) {
                out.push(Token {
                    tok: Tok::Punct(ch),
                    line,
                    col: c + 1,
                });
                c += 1;
                continue;
            }
            let start = c;
            while c < chars.len() && !chars[c].is_whitespace() && !PUNCT.contains(&chars[c]) && chars[c] != '#' {
                c += 1;
            }
            // `stem[digits]` stays one word.
            if c < chars.len() && chars[c] == '[' {
                let mut d = c + 1;
                while d < chars.len() && chars[d].is_ascii_digit() {
                    d += 1;
                }
                if d > c + 1 && d < chars.len() && chars[d] == ']' {
                    c = d + 1;
                }
            }
            out.push(Token {
                tok: Tok::Word(chars[start..c].iter().collect()),
                line,
                col: start + 1,
            });
        }
        out.push(Token {
            tok: Tok::Newline,
            line,
            col: chars.len() + 1,
        });
    }
    let line = out.last().map_or(1, |t| t.line + 1);
    out.push(Token { tok: Tok::Eof, line, col: 1 });
    out
}

type PResult<T> = Result<T, ProjectError>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser { toks: lex(text), pos: 0 }
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, t: &Token, message: impl Into<String>) -> PResult<T> {
        Err(ProjectError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(t: &Token) -> String {
        match &t.tok {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of file".into(),
        }
    }

    fn word(&mut self, what: &str) -> PResult<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Word(w) => Ok((w.clone(), t.clone())),
            _ => self.error(&t, format!("expected {what}, found {}", Self::describe(&t))),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Token> {
        let (w, t) = self.word(&format!("`{kw}`"))?;
        if w == kw {
            Ok(t)
        } else {
            self.error(&t, format!("expected `{kw}`, found `{w}`"))
        }
    }

    fn punct(&mut self, c: char) -> PResult<Token> {
        let t = self.next();
        if t.tok == Tok::Punct(c) {
            Ok(t)
        } else {
            self.error(&t, format!("expected `{c}`, found {}", Self::describe(&t)))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn peek_word(&self) -> Option<&str> {
        match &self.peek().tok {
            Tok::Word(w) => Some(w),
            _ => None,
        }
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.pos += 1;
        }
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Newline => {
                self.pos += 1;
                Ok(())
            }
            Tok::Eof | Tok::Punct('}') => Ok(()),
            _ => self.error(&t, format!("unexpected {} at end of statement", Self::describe(&t))),
        }
    }

    fn expect_end(&mut self) -> PResult<()> {
        self.skip_newlines();
        let t = self.peek().clone();
        if t.tok == Tok::Eof {
            Ok(())
        } else {
            self.error(&t, format!("unexpected {}", Self::describe(&t)))
        }
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> PResult<(T, Token)> {
        let (w, t) = self.word(what)?;
        match w.parse() {
            Ok(v) => Ok((v, t)),
            Err(_) => self.error(&t, format!("expected {what}, found `{w}`")),
        }
    }

    fn real(&mut self, what: &str) -> PResult<f64> {
        let (v, t): (f64, Token) = self.number(what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            self.error(&t, format!("{what} must be finite"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(Ident, Token)> {
        let (w, t) = self.word(what)?;
        match w.parse() {
            Ok(id) => Ok((id, t)),
            Err(_) => self.error(&t, format!("invalid identifier `{w}`")),
        }
    }

    fn name(&mut self, what: &str) -> PResult<(String, Token)> {
        let (w, t) = self.word(what)?;
        if is_stem(&w) {
            Ok((w, t))
        } else {
            self.error(&t, format!("invalid {what} `{w}`"))
        }
    }

    fn rank(&mut self, what: &str) -> PResult<(Rank, Token)> {
        let (w, t) = self.word(what)?;
        match w.parse() {
            Ok(r) => Ok((r, t)),
            Err(e) => self.error(&t, e),
        }
    }

    // ---- index sets ------------------------------------------------------

    fn index_set(&mut self) -> PResult<IndexSet> {
        let (w, t) = self.word("an index set")?;
        match w.as_str() {
            "none" => Ok(IndexSet::empty()),
            "all" => Ok(IndexSet::all()),
            "evens" => Ok(IndexSet::evens()),
            "odds" => Ok(IndexSet::odds()),
            "mod" => {
                self.punct('(')?;
                let (m, mt): (u64, Token) = self.number("a modulus")?;
                self.punct(',')?;
                let (r, _): (u64, Token) = self.number("a residue")?;
                self.punct(')')?;
                if m == 0 || r >= m || m > 1 << 20 {
                    return self.error(&mt, format!("invalid residue class mod({m},{r})"));
                }
                Ok(IndexSet::residue(m, r))
            }
            "finite" | "cofinite" => {
                self.punct('(')?;
                let mut members = BTreeSet::new();
                if !self.eat_punct(')') {
                    loop {
                        let (k, _): (u64, Token) = self.number("an index")?;
                        members.insert(k);
                        if self.eat_punct(')') {
                            break;
                        }
                        self.punct(',')?;
                    }
                }
                Ok(if w == "finite" {
                    IndexSet::finite(members)
                } else {
                    IndexSet::cofinite(members)
                })
            }
            "periodic" => {
                self.punct('(')?;
                let mut prefix = Vec::new();
                let (mut key, mut kt) = self.word("`pre` or `cycle`")?;
                if key == "pre" {
                    self.punct('=')?;
                    prefix = self.bits()?;
                    self.punct(',')?;
                    (key, kt) = self.word("`cycle`")?;
                }
                if key != "cycle" {
                    return self.error(&kt, format!("expected `cycle`, found `{key}`"));
                }
                self.punct('=')?;
                let cycle = self.bits()?;
                if cycle.is_empty() {
                    return self.error(&kt, "empty cycle");
                }
                self.punct(')')?;
                Ok(IndexSet::periodic(prefix, cycle))
            }
            _ => self.error(&t, format!("unknown index set `{w}`")),
        }
    }

    fn bits(&mut self) -> PResult<Vec<bool>> {
        let (w, t) = self.word("a word of 0s and 1s")?;
        if w.len() > 1 << 16 {
            return self.error(&t, "bit word too long");
        }
        w.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => self.error(&t, format!("expected 0s and 1s, found `{w}`")),
            })
            .collect()
    }

    fn pin_spec(&mut self) -> PResult<(IndexSet, Membership)> {
        let set = self.index_set()?;
        self.punct('=')?;
        let v = self.verdict()?;
        Ok((set, v))
    }

    fn verdict(&mut self) -> PResult<Membership> {
        let (w, t) = self.word("`in` or `out`")?;
        match w.as_str() {
            "in" => Ok(Membership::In),
            "out" => Ok(Membership::Out),
            _ => self.error(&t, format!("expected `in` or `out`, found `{w}`")),
        }
    }

    // ---- sequences -------------------------------------------------------

    fn list<V>(&mut self, item: &mut impl FnMut(&mut Self) -> PResult<V>) -> PResult<Vec<V>> {
        self.punct('[')?;
        let mut out = Vec::new();
        loop {
            if self.eat_punct(']') {
                return Ok(out);
            }
            out.push(item(self)?);
            self.eat_punct(',');
        }
    }

    /// `pre=[..] cycle=[..]`, `cycle=[..]`, or a generator when `gen` is
    /// given.
    fn seq<V: SeqValue>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> PResult<V>,
        gen: Option<&dyn Fn(&Token, &str, &[f64], u64, Traits) -> PResult<SeqDescriptor<V>>>,
    ) -> PResult<SeqDescriptor<V>> {
        let (w, t) = self.word("a sequence (`pre=`, `cycle=` or `gen=`)")?;
        match w.as_str() {
            "pre" | "cycle" => {
                self.punct('=')?;
                let mut prefix = Vec::new();
                if w == "pre" {
                    prefix = self.list(&mut item)?;
                    self.keyword("cycle")?;
                    self.punct('=')?;
                }
                let cycle = self.list(&mut item)?;
                if cycle.is_empty() {
                    return self.error(&t, "empty cycle");
                }
                Ok(SeqDescriptor::periodic(prefix, cycle))
            }
            "gen" => {
                let Some(gen) = gen else {
                    return self.error(&t, "generators are only available for numeric sequences");
                };
                self.punct('=')?;
                let (name, nt) = self.word("a generator name")?;
                let mut args = Vec::new();
                if self.eat_punct('(') {
                    loop {
                        args.push(self.real("a generator argument")?);
                        if self.eat_punct(')') {
                            break;
                        }
                        self.punct(',')?;
                    }
                }
                let mut nmax = None;
                let mut traits = Traits::default();
                while let Some(key) = self.peek_word().map(str::to_string) {
                    let kt = self.next();
                    self.punct('=')?;
                    match key.as_str() {
                        "nmax" => {
                            let (n, t): (u64, Token) = self.number("a horizon")?;
                            if n > MAX_NMAX {
                                return self.error(&t, format!("nmax above {MAX_NMAX}"));
                            }
                            nmax = Some(n);
                        }
                        "traits" => loop {
                            let (tr, tt) = self.word("a trait")?;
                            match tr.as_str() {
                                "injective" => traits.injective = true,
                                "unbounded" => traits.unbounded = true,
                                "monotone" => traits.monotone = true,
                                _ => return self.error(&tt, format!("unknown trait `{tr}`")),
                            }
                            if !self.eat_punct(',') {
                                break;
                            }
                        },
                        "limit" => traits.limit = Some(self.real("a limit")?),
                        _ => return self.error(&kt, format!("unknown generator option `{key}`")),
                    }
                }
                let Some(nmax) = nmax else {
                    return self.error(&nt, "generator needs `nmax=`");
                };
                gen(&nt, &name, &args, nmax, traits)
            }
            _ => self.error(&t, format!("expected `pre=`, `cycle=` or `gen=`, found `{w}`")),
        }
    }

    fn numeric_seq<V: Numeric>(&mut self, item: impl FnMut(&mut Self) -> PResult<V>) -> PResult<SeqDescriptor<V>> {
        let gen = |t: &Token, name: &str, args: &[f64], nmax: u64, traits: Traits| -> PResult<SeqDescriptor<V>> {
            let arity = |n: usize| -> PResult<()> {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(ProjectError::Syntax {
                        line: t.line,
                        col: t.col,
                        message: format!("generator `{name}` takes {n} argument(s)"),
                    })
                }
            };
            match name {
                "identity" => {
                    arity(0)?;
                    Ok(generators::identity(nmax, traits))
                }
                "constant" => {
                    arity(1)?;
                    Ok(generators::constant(args[0], nmax, traits))
                }
                "affine" => {
                    arity(2)?;
                    Ok(generators::affine(args[0], args[1], nmax, traits))
                }
                _ => Err(ProjectError::Syntax {
                    line: t.line,
                    col: t.col,
                    message: format!("unknown generator `{name}`"),
                }),
            }
        };
        self.seq(item, Some(&gen))
    }

    fn real_seq(&mut self) -> PResult<SeqDescriptor<f64>> {
        let gen = |t: &Token, name: &str, args: &[f64], nmax: u64, traits: Traits| -> PResult<SeqDescriptor<f64>> {
            match (name, args) {
                ("identity", []) => Ok(generators::identity(nmax, traits)),
                ("constant", [k]) => Ok(generators::constant(*k, nmax, traits)),
                ("affine", [a, b]) => Ok(generators::affine(*a, *b, nmax, traits)),
                ("reciprocal", [a, b]) => Ok(generators::reciprocal(*a, *b, nmax, traits)),
                ("identity" | "constant" | "affine" | "reciprocal", _) => Err(ProjectError::Syntax {
                    line: t.line,
                    col: t.col,
                    message: format!("wrong number of arguments for generator `{name}`"),
                }),
                _ => Err(ProjectError::Syntax {
                    line: t.line,
                    col: t.col,
                    message: format!("unknown generator `{name}`"),
                }),
            }
        };
        self.seq(|p: &mut Self| p.real("a real number"), Some(&gen))
    }

    fn index_seq(&mut self) -> PResult<SeqDescriptor<u64>> {
        self.numeric_seq(|p: &mut Self| p.number::<u64>("an index").map(|(v, _)| v))
    }
}

/// Identifiers used but not yet resolved, with their locations.
struct Refs(Vec<(Token, &'static str, String)>);

impl Refs {
    fn add(&mut self, t: &Token, kind: &'static str, name: impl ToString) {
        self.0.push((t.clone(), kind, name.to_string()));
    }
}

fn unresolved<T>(t: &Token, kind: &'static str, name: &str) -> PResult<T> {
    Err(ProjectError::UnresolvedReference {
        line: t.line,
        col: t.col,
        kind,
        name: name.to_string(),
    })
}

/// Records first declarations and rejects repeats.
#[derive(Default)]
struct Declared(HashMap<String, usize>);

impl Declared {
    fn declare(&mut self, t: &Token, kind: &'static str, name: &str) -> PResult<()> {
        if let Some(&first_line) = self.0.get(name) {
            return Err(ProjectError::DuplicateId {
                line: t.line,
                col: t.col,
                kind,
                name: name.to_string(),
                first_line,
            });
        }
        self.0.insert(name.to_string(), t.line);
        Ok(())
    }

    fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }
}

/// Parses and resolves a project file.
pub fn parse(text: &str) -> Result<Project, ProjectError> {
    let mut p = Parser::new(text);
    let mut project = Project::default();
    let mut blocks = Declared::default();
    let mut graph_names = Declared::default();
    // Identifiers declared by each finite graph, and template stems.
    let mut known_ids: BTreeSet<Ident> = BTreeSet::new();
    let mut known_stems: BTreeSet<String> = BTreeSet::new();
    let mut template_stems: BTreeSet<&str> = BTreeSet::new();
    let mut branch_ids: BTreeSet<Ident> = BTreeSet::new();
    let mut graph_refs = Refs(Vec::new());
    let mut id_refs = Refs(Vec::new());
    let mut stem_refs = Refs(Vec::new());
    let mut branch_refs = Refs(Vec::new());
    let mut ext_names = Declared::default();
    let mut ext_refs = Refs(Vec::new());
    loop {
        p.skip_newlines();
        if p.peek().tok == Tok::Eof {
            break;
        }
        let (kw, kt) = p.word("a block keyword")?;
        match kw.as_str() {
            "oracle" => {
                blocks.declare(&kt, "block", "oracle")?;
                project.oracle = oracle_block(&mut p)?;
            }
            "graph" => {
                let (name, nt) = p.name("graph name")?;
                graph_names.declare(&nt, "graph", &name)?;
                let g = graph_decl(&mut p, &name)?;
                match g.as_finite() {
                    Some(fg) => {
                        known_ids.extend(fg.zero_nodes.iter().cloned());
                        known_ids.extend(fg.tips.values().flatten().cloned());
                        known_ids.extend(fg.nodes.values().flatten().map(|n| n.id.clone()));
                        known_stems.extend(known_ids.iter().map(|i| i.stem().to_string()));
                    }
                    None => {
                        let stems = ["x", "u", "ta", "tb", "y", "w"];
                        template_stems.extend(stems);
                        known_stems.extend(stems.map(String::from));
                    }
                }
                branch_ids.extend(g.branches().into_keys());
                project.graphs.push(g);
            }
            "family" => {
                blocks.declare(&kt, "block", "family")?;
                project.family = Some(family_block(&mut p, &mut graph_refs)?);
            }
            "network" => {
                blocks.declare(&kt, "block", "network")?;
                project.network = Some(network_block(&mut p, &mut branch_refs)?);
            }
            "queries" => {
                blocks.declare(&kt, "block", "queries")?;
                queries_block(
                    &mut p,
                    &mut project,
                    &mut ext_names,
                    &mut ext_refs,
                    &mut id_refs,
                    &mut stem_refs,
                )?;
            }
            _ => return p.error(&kt, format!("unknown block `{kw}`")),
        }
    }
    for (t, kind, name) in &graph_refs.0 {
        if !graph_names.contains(name) {
            return unresolved(t, kind, name);
        }
    }
    for (t, kind, name) in &branch_refs.0 {
        if !branch_ids.contains(&name.parse::<Ident>().expect("parsed as ident")) {
            return unresolved(t, kind, name);
        }
    }
    for (t, kind, name) in &id_refs.0 {
        let id: Ident = name.parse().expect("parsed as ident");
        let templated = id.index().is_some() && template_stems.contains(id.stem());
        if !known_ids.contains(&id) && !templated {
            return unresolved(t, kind, name);
        }
    }
    for (t, kind, name) in &stem_refs.0 {
        if !known_stems.contains(name) {
            return unresolved(t, kind, name);
        }
    }
    for (t, kind, name) in &ext_refs.0 {
        if !ext_names.contains(name) {
            return unresolved(t, kind, name);
        }
    }
    Ok(project)
}

fn block_open(p: &mut Parser) -> PResult<()> {
    p.punct('{')?;
    p.end_of_statement()
}

/// Runs `stmt` for each statement until the closing brace.
fn block_body(p: &mut Parser, mut stmt: impl FnMut(&mut Parser, String, Token) -> PResult<()>) -> PResult<()> {
    loop {
        p.skip_newlines();
        if p.eat_punct('}') {
            return p.end_of_statement();
        }
        let t = p.peek().clone();
        if t.tok == Tok::Eof {
            return p.error(&t, "missing `}`");
        }
        let (kw, kt) = p.word("a statement")?;
        stmt(p, kw, kt)?;
        p.end_of_statement()?;
    }
}

fn oracle_block(p: &mut Parser) -> PResult<OracleConfig> {
    block_open(p)?;
    let mut cfg = OracleConfig::default();
    block_body(p, |p, kw, kt| match kw.as_str() {
        "tower" => {
            let (m, mt): (u64, Token) = p.number("a modulus")?;
            let (r, _): (u64, Token) = p.number("a residue")?;
            if m == 0 || r >= m {
                return p.error(&mt, format!("residue {r} is not below modulus {m}"));
            }
            cfg.tower.push((m, r));
            Ok(())
        }
        "pin" => {
            let set = p.index_set()?;
            let v = p.verdict()?;
            cfg.pins.push((set, v));
            Ok(())
        }
        _ => p.error(&kt, format!("unknown oracle statement `{kw}`")),
    })?;
    Ok(cfg)
}

fn graph_decl(p: &mut Parser, name: &str) -> PResult<StandardGraph> {
    let (kw, kt) = p.word("`rank` or `template`")?;
    match kw.as_str() {
        "template" => {
            let (tname, tt) = p.word("a template name")?;
            if tname != "tower" {
                return p.error(&tt, format!("unknown template `{tname}`"));
            }
            p.keyword("rank")?;
            let (rank, rt) = p.rank("a rank")?;
            let omega = match rank {
                Rank::Omega => true,
                Rank::ArrowOmega => false,
                Rank::Natural(_) => return p.error(&rt, "templates have rank omega or arrow-omega"),
            };
            let mut window = 4;
            if p.peek_word() == Some("window") {
                p.next();
                let (w, wt): (u64, Token) = p.number("a window size")?;
                if w == 0 || w > MAX_WINDOW {
                    return p.error(&wt, format!("window must be in 1..={MAX_WINDOW}"));
                }
                window = w;
            }
            p.end_of_statement()?;
            Ok(StandardGraph::template(name, Template::Tower { omega, window }))
        }
        "rank" => {
            let (rank, rt) = p.rank("a rank")?;
            let Rank::Natural(rank) = rank else {
                return p.error(&rt, "graphs of rank omega or arrow-omega must use a template");
            };
            block_open(p)?;
            finite_graph(p, name, rank)
        }
        _ => p.error(&kt, format!("expected `rank` or `template`, found `{kw}`")),
    }
}

fn finite_graph(p: &mut Parser, name: &str, rank: u32) -> PResult<StandardGraph> {
    let mut g = FiniteGraph::default();
    let mut ids = Declared::default();
    let mut refs = Refs(Vec::new());
    block_body(p, |p, kw, kt| {
        match kw.as_str() {
            "zero" => {
                while !matches!(p.peek().tok, Tok::Newline | Tok::Eof | Tok::Punct('}')) {
                    let (id, t) = p.ident("a 0-node")?;
                    ids.declare(&t, "identifier", &id.to_string())?;
                    g.zero_nodes.insert(id);
                }
            }
            "branch" => {
                let (b, bt) = p.ident("a branch id")?;
                let (t, tt) = p.ident("an endpoint")?;
                let (h, ht) = p.ident("an endpoint")?;
                ids.declare(&bt, "identifier", &b.to_string())?;
                refs.add(&tt, "0-node", &t);
                refs.add(&ht, "0-node", &h);
                g.branches.insert(b, (t, h));
            }
            "tips" => {
                let (r, _): (u32, Token) = p.number("a tip rank")?;
                let set = g.tips.entry(r).or_default();
                while !matches!(p.peek().tok, Tok::Newline | Tok::Eof | Tok::Punct('}')) {
                    let (id, t) = p.ident("a tip id")?;
                    ids.declare(&t, "identifier", &id.to_string())?;
                    set.insert(id);
                }
            }
            "node" => {
                let (r, rt): (u32, Token) = p.number("a node rank")?;
                if r == 0 {
                    return p.error(&rt, "0-nodes are declared with `zero`");
                }
                let (id, it) = p.ident("a node id")?;
                ids.declare(&it, "identifier", &id.to_string())?;
                p.keyword("tips")?;
                let mut tips = BTreeSet::new();
                let mut exceptional = None;
                while let Some(w) = p.peek_word().map(str::to_string) {
                    if w == "exceptional" {
                        p.next();
                        let (x, xt) = p.ident("an exceptional node")?;
                        refs.add(&xt, "node", &x);
                        exceptional = Some(x);
                        break;
                    }
                    let (tip, tt) = p.ident("a tip id")?;
                    refs.add(&tt, "tip", format!("{}:{tip}", r - 1));
                    tips.insert(tip);
                }
                g.nodes.entry(r).or_default().push(StandardNode {
                    id,
                    rank: Rank::Natural(r),
                    tips,
                    exceptional,
                });
            }
            _ => return p.error(&kt, format!("unknown graph statement `{kw}`")),
        }
        Ok(())
    })?;
    let node_ids: BTreeSet<&Ident> = g.nodes.values().flatten().map(|n| &n.id).collect();
    for (t, kind, name) in &refs.0 {
        let ok = match *kind {
            "0-node" => g.zero_nodes.contains(&name.parse::<Ident>().expect("ident")),
            "node" => {
                let id: Ident = name.parse().expect("ident");
                g.zero_nodes.contains(&id) || node_ids.contains(&id)
            }
            _ => {
                let (r, tip) = name.split_once(':').expect("rank:tip");
                let r: u32 = r.parse().expect("rank");
                g.tips
                    .get(&r)
                    .is_some_and(|s| s.contains(&tip.parse::<Ident>().expect("ident")))
            }
        };
        if !ok {
            let shown = name.split_once(':').map_or(name.as_str(), |(_, t)| t);
            let kind = if *kind == "tip" { "tip" } else { kind };
            return unresolved(t, kind, shown);
        }
    }
    Ok(StandardGraph::finite(name, rank, g))
}

fn family_block(p: &mut Parser, graph_refs: &mut Refs) -> PResult<FamilyDecl> {
    block_open(p)?;
    let mut rank = None;
    let mut assign = None;
    let mut seen = Declared::default();
    block_body(p, |p, kw, kt| match kw.as_str() {
        "rank" => {
            seen.declare(&kt, "statement", "rank")?;
            rank = Some(p.rank("a rank")?.0);
            Ok(())
        }
        "assign" => {
            seen.declare(&kt, "statement", "assign")?;
            let s = p.seq(
                |p: &mut Parser| {
                    let (n, t) = p.name("graph name")?;
                    graph_refs.add(&t, "graph", &n);
                    Ok(n)
                },
                None,
            )?;
            assign = Some(s);
            Ok(())
        }
        _ => p.error(&kt, format!("unknown family statement `{kw}`")),
    })?;
    match assign {
        Some(assign) => Ok(FamilyDecl { rank, assign }),
        None => {
            let t = p.toks[p.pos.saturating_sub(1)].clone();
            p.error(&t, "family block needs `assign`")
        }
    }
}

fn network_block(p: &mut Parser, branch_refs: &mut Refs) -> PResult<NetworkDecl> {
    block_open(p)?;
    let mut net = NetworkDecl::default();
    let mut seen_r = Declared::default();
    let mut seen_e = Declared::default();
    block_body(p, |p, kw, kt| {
        let (map, seen) = match kw.as_str() {
            "resistance" => (&mut net.resistances, &mut seen_r),
            "source" => (&mut net.sources, &mut seen_e),
            _ => return p.error(&kt, format!("unknown network statement `{kw}`")),
        };
        let (b, bt) = p.ident("a branch id")?;
        seen.declare(&bt, if kw == "source" { "source" } else { "resistance" }, &b.to_string())?;
        branch_refs.add(&bt, "branch", &b);
        let s = p.real_seq()?;
        map.insert(b, s);
        Ok(())
    })?;
    Ok(net)
}

fn queries_block(
    p: &mut Parser,
    project: &mut Project,
    names: &mut Declared,
    ext_refs: &mut Refs,
    id_refs: &mut Refs,
    stem_refs: &mut Refs,
) -> PResult<()> {
    block_open(p)?;
    block_body(p, |p, kw, kt| match kw.as_str() {
        "extremity" => {
            let (name, nt) = p.name("extremity name")?;
            names.declare(&nt, "extremity", &name)?;
            p.keyword("level")?;
            let (level, lt) = p.rank("a level")?;
            if level == Rank::Natural(0) {
                return p.error(&lt, "extremity levels start at 1");
            }
            let rep = if p.peek_word() == Some("indexed") {
                p.next();
                let (stem, st) = p.name("a stem")?;
                stem_refs.add(&st, "stem", &stem);
                ExtremitySeq::Indexed {
                    stem: stem.as_str().into(),
                    index: p.index_seq()?,
                }
            } else {
                ExtremitySeq::Listed(p.seq(
                    |p: &mut Parser| {
                        let (id, t) = p.ident("an extremity id")?;
                        id_refs.add(&t, "identifier", &id);
                        Ok(id)
                    },
                    None,
                )?)
            };
            project.extremities.push(ExtremityDecl { name, level, rep });
            Ok(())
        }
        "classify" => {
            let (a, at) = p.name("extremity name")?;
            ext_refs.add(&at, "extremity", &a);
            project.queries.push(Query::Classify(a));
            Ok(())
        }
        "shorted" => {
            let (a, at) = p.name("extremity name")?;
            let (b, bt) = p.name("extremity name")?;
            ext_refs.add(&at, "extremity", &a);
            ext_refs.add(&bt, "extremity", &b);
            project.queries.push(Query::Shorted(a, b));
            Ok(())
        }
        _ => p.error(&kt, format!("unknown query statement `{kw}`")),
    })
}

/// Parses a set descriptor such as `evens`, `mod(3,1)` or
/// `periodic(pre=01,cycle=10)`.
pub fn parse_index_set(text: &str) -> Result<IndexSet, ProjectError> {
    let mut p = Parser::new(text);
    p.skip_newlines();
    let s = p.index_set()?;
    p.expect_end()?;
    Ok(s)
}

/// Parses a `<set>=in|out` pin flag.
pub fn parse_pin_spec(text: &str) -> Result<(IndexSet, Membership), ProjectError> {
    let mut p = Parser::new(text);
    p.skip_newlines();
    let pin = p.pin_spec()?;
    p.expect_end()?;
    Ok(pin)
}

/// Parses a real-valued sequence descriptor.
pub fn parse_seq(text: &str) -> Result<SeqDescriptor<f64>, ProjectError> {
    let mut p = Parser::new(text);
    p.skip_newlines();
    let s = p.real_seq()?;
    p.expect_end()?;
    Ok(s)
}
