//! Scratch-style text and renderer-neutral layout for block fragments.
//!
//! Text follows the scratchblocks conventions: numbers in `( )`, text in
//! `[ ]`, booleans in `< >`, dropdown fields as `[value v]`, dropdown menus
//! as `(value v)`, substacks indented by two spaces and closed by `end`.
//! Opcodes missing from the catalog fall back to `[unknown: opcode]` with
//! their raw parameters.

use serde::{Deserialize, Serialize};

use crate::diff::BlockStep;
use crate::sb3::catalog::{self, CatalogEntry, Category, Shape, SlotKind};
use crate::sb3::{BlockNode, BlockSeq, InputValue, Literal, LiteralKind, Script};

pub const SPEC_VERSION: u32 = 1;

const INDENT: &str = "  ";

/// Anything that can be viewed as a sequence of top-level blocks.
pub trait AsBlocks {
    fn as_blocks(&self) -> &[BlockNode];
}

impl AsBlocks for BlockNode {
    fn as_blocks(&self) -> &[BlockNode] {
        std::slice::from_ref(self)
    }
}

impl AsBlocks for BlockSeq {
    fn as_blocks(&self) -> &[BlockNode] {
        &self.blocks
    }
}

impl AsBlocks for [BlockNode] {
    fn as_blocks(&self) -> &[BlockNode] {
        self
    }
}

impl AsBlocks for Vec<BlockNode> {
    fn as_blocks(&self) -> &[BlockNode] {
        self
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("hat block at position {0}; hats may only start a script")]
    HatNotFirst(usize),
}

// ---------------------------------------------------------------------------
// text

/// Render a fragment as Scratch-style lines.
pub fn to_text<F: AsBlocks + ?Sized>(fragment: &F) -> Vec<String> {
    let mut out = Vec::new();
    for block in fragment.as_blocks() {
        block_lines(block, 0, &mut out);
    }
    out
}

/// Lines of a whole script, hat first.
pub fn script_text(script: &Script) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(hat) = &script.hat {
        block_lines(hat, 0, &mut out);
    }
    for block in &script.body.blocks {
        block_lines(block, 0, &mut out);
    }
    out
}

fn block_lines(block: &BlockNode, depth: usize, out: &mut Vec<String>) {
    let indent = INDENT.repeat(depth);
    let entry = catalog::lookup(&block.opcode);
    let head = match entry {
        _ if is_argument(block) => inline(block),
        Some(e) if e.menu => inline(block),
        Some(e) if e.shape == Shape::Reporter => format!("({})", label(block)),
        Some(e) if e.shape == Shape::Boolean => format!("<{}>", label(block)),
        _ => label(block),
    };
    out.push(format!("{indent}{head}"));
    if !has_body(block) {
        return;
    }
    for (k, seq) in block.substacks.iter().enumerate() {
        if k > 0 {
            let word = entry.and_then(|e| e.else_label).unwrap_or("else");
            out.push(format!("{indent}{word}"));
        }
        for b in &seq.blocks {
            block_lines(b, depth + 1, out);
        }
    }
    out.push(format!("{indent}end"));
}

/// Whether a block draws with an enclosing body and an `end` line.
fn has_body(block: &BlockNode) -> bool {
    match catalog::lookup(&block.opcode) {
        Some(e) => e.shape == Shape::CBlock,
        None => !block.substacks.is_empty(),
    }
}

fn is_argument(block: &BlockNode) -> bool {
    block.opcode.starts_with("argument_reporter_")
}

/// Block text without the outer bracket.
fn label(block: &BlockNode) -> String {
    match catalog::lookup(&block.opcode) {
        Some(e) if e.variadic => custom_label(block),
        Some(e) => fill_template(e, block),
        None => unknown_label(block),
    }
}

/// Text of a block used as a value inside another block's slot.
fn inline(block: &BlockNode) -> String {
    if is_argument(block) {
        let name = block.field("VALUE").map_or("", |f| f.value.as_str());
        return if block.opcode == "argument_reporter_boolean" {
            format!("<{name}>")
        } else {
            format!("({name})")
        };
    }
    match catalog::lookup(&block.opcode) {
        Some(e) if e.menu => format!("({} v)", menu_value(block)),
        Some(e) if e.shape == Shape::Boolean => format!("<{}>", label(block)),
        _ => format!("({})", label(block)),
    }
}

fn menu_value(block: &BlockNode) -> &str {
    match block.fields.first().map_or("", |f| f.value.as_str()) {
        "_edge_" => "edge",
        "_mouse_" => "mouse-pointer",
        "_myself_" => "myself",
        "_random_" => "random position",
        "_stage_" => "Stage",
        v => v,
    }
}

fn fill_template(entry: &CatalogEntry, block: &BlockNode) -> String {
    let mut out = String::new();
    for token in template_tokens(entry.template) {
        match token {
            Token::Text(t) => out.push_str(t),
            Token::Slot(name) => {
                let kind = entry.slot(name).map_or(SlotKind::Text, |s| s.kind);
                out.push_str(&slot_text(block, name, kind));
            }
        }
    }
    out
}

fn slot_text(block: &BlockNode, name: &str, kind: SlotKind) -> String {
    match kind {
        SlotKind::Field => {
            let value = block.field(name).map_or("", |f| f.value.as_str());
            format!("[{value} v]")
        }
        SlotKind::Prototype => match block.input(name).map(|s| &s.value) {
            Some(InputValue::Expression(proto)) => custom_label(proto),
            _ => String::new(),
        },
        _ => match block.input(name) {
            Some(slot) => value_text(&slot.value, kind),
            None => empty_text(kind),
        },
    }
}

/// Bracketed text of one input value.
pub fn value_text(value: &InputValue, kind: SlotKind) -> String {
    match value {
        InputValue::Literal(lit) => {
            let (bracket, text) = literal_form(lit);
            bracket.wrap(&text)
        }
        InputValue::Expression(b) => inline(b),
        InputValue::Variable(r) | InputValue::List(r) => format!("({})", r.name),
        InputValue::Broadcast(r) => format!("({} v)", r.name),
        InputValue::Empty => empty_text(kind),
    }
}

fn literal_form(lit: &Literal) -> (Bracket, String) {
    match lit.kind {
        LiteralKind::Text => (Bracket::Square, lit.value.clone()),
        LiteralKind::Color => (Bracket::Square, lit.value.clone()),
        _ => (Bracket::Round, lit.value.clone()),
    }
}

fn empty_text(kind: SlotKind) -> String {
    empty_bracket(kind).wrap("")
}

fn empty_bracket(kind: SlotKind) -> Bracket {
    match kind {
        SlotKind::Boolean => Bracket::Angle,
        SlotKind::Text | SlotKind::Color => Bracket::Square,
        _ => Bracket::Round,
    }
}

/// Label of a custom block call or prototype from its proccode.
fn custom_label(block: &BlockNode) -> String {
    let Some(code) = block.proccode() else {
        return unknown_label(block);
    };
    let ids = block.argument_ids();
    let names = argument_names(block);
    let mut out = String::new();
    let mut arg = 0usize;
    for part in proccode_parts(code) {
        match part {
            ProcPart::Text(t) => out.push_str(t),
            ProcPart::Arg(boolean) => {
                let kind = if boolean { SlotKind::Boolean } else { SlotKind::Text };
                let bracket = if boolean { Bracket::Angle } else { Bracket::Round };
                let text = match (ids.get(arg), names.get(arg)) {
                    (Some(_), Some(name)) if block.opcode == "procedures_prototype" => bracket.wrap(name),
                    (Some(id), _) => match block.input(id) {
                        Some(slot) => value_text(&slot.value, kind),
                        None => empty_text(kind),
                    },
                    (None, _) => empty_text(kind),
                };
                out.push_str(&text);
                arg += 1;
            }
        }
    }
    out.trim().to_string()
}

fn argument_names(block: &BlockNode) -> Vec<String> {
    block
        .mutation_str("argumentnames")
        .and_then(|s| serde_json::from_str::<Vec<String>>(s).ok())
        .unwrap_or_default()
}

enum ProcPart<'a> {
    Text(&'a str),
    Arg(bool),
}

fn proccode_parts(code: &str) -> Vec<ProcPart<'_>> {
    let mut parts = Vec::new();
    let mut rest = code;
    while let Some(pos) = rest.find('%') {
        let after = &rest[pos + 1..];
        match after.chars().next() {
            Some(c @ ('s' | 'b' | 'n')) => {
                if pos > 0 {
                    parts.push(ProcPart::Text(&rest[..pos]));
                }
                parts.push(ProcPart::Arg(c == 'b'));
                rest = &after[1..];
            }
            _ => {
                parts.push(ProcPart::Text(&rest[..pos + 1]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        parts.push(ProcPart::Text(rest));
    }
    parts
}

fn unknown_label(block: &BlockNode) -> String {
    let mut params = Vec::new();
    for slot in &block.inputs {
        params.push(format!("{}={}", slot.name, raw_value(&slot.value)));
    }
    for f in &block.fields {
        params.push(format!("{}={}", f.name, f.value));
    }
    if params.is_empty() {
        format!("[unknown: {}]", block.opcode)
    } else {
        format!("[unknown: {}] ({})", block.opcode, params.join(", "))
    }
}

fn raw_value(value: &InputValue) -> String {
    match value {
        InputValue::Literal(lit) => lit.value.clone(),
        InputValue::Expression(b) => inline(b),
        InputValue::Variable(r) | InputValue::List(r) | InputValue::Broadcast(r) => r.name.clone(),
        InputValue::Empty => String::new(),
    }
}

enum Token<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn template_tokens(template: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        if open > 0 {
            tokens.push(Token::Text(&rest[..open]));
        }
        tokens.push(Token::Slot(&rest[open + 1..open + close]));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        tokens.push(Token::Text(rest));
    }
    tokens
}

/// Title of the event that starts a script, e.g. `When Green Flag Clicked`
/// or `When I Receive [start]`.
pub fn event_title(hat: Option<&BlockNode>) -> String {
    let Some(hat) = hat else {
        return "Loose Blocks".to_string();
    };
    let line = label(hat).replace(" v]", "]").replace(" v)", ")");
    let mut out = String::with_capacity(line.len());
    let mut depth = 0usize;
    let mut word_start = true;
    for c in line.chars() {
        match c {
            '[' | '(' | '<' => depth += 1,
            ']' | ')' | '>' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if word_start && depth == 0 && c.is_alphabetic() {
            out.extend(c.to_uppercase());
        } else {
            out.push(c);
        }
        word_start = c.is_whitespace();
    }
    out
}

// ---------------------------------------------------------------------------
// render specs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RenderShape {
    Hat,
    Stack,
    CBlock,
    Reporter,
    Boolean,
    Cap,
    /// Vertical composite of top-level blocks produced by [`stitch`].
    Script,
}

impl From<Shape> for RenderShape {
    fn from(shape: Shape) -> Self {
        match shape {
            Shape::Hat => RenderShape::Hat,
            Shape::Stack => RenderShape::Stack,
            Shape::CBlock => RenderShape::CBlock,
            Shape::Reporter => RenderShape::Reporter,
            Shape::Boolean => RenderShape::Boolean,
            Shape::Cap => RenderShape::Cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Bracket {
    /// `(value)`
    Round,
    /// `[value]`
    Square,
    /// `<value>`
    Angle,
    /// `[value v]`
    Dropdown,
    /// `(value v)`
    Menu,
    /// bare value
    Plain,
}

impl Bracket {
    pub fn wrap(self, value: &str) -> String {
        match self {
            Bracket::Round => format!("({value})"),
            Bracket::Square => format!("[{value}]"),
            Bracket::Angle => format!("<{value}>"),
            Bracket::Dropdown => format!("[{value} v]"),
            Bracket::Menu => format!("({value} v)"),
            Bracket::Plain => value.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Segment {
    Text {
        text: String,
    },
    #[serde(rename_all = "camelCase")]
    Slot {
        name: String,
        value: String,
        bracket: Bracket,
        highlighted: bool,
    },
    /// Reporter or boolean block plugged into a slot.
    #[serde(rename_all = "camelCase")]
    Block {
        name: String,
        spec: Box<RenderSpec>,
        highlighted: bool,
    },
    Substack {
        blocks: Vec<RenderSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RenderSpec {
    pub spec_version: u32,
    pub shape: RenderShape,
    pub category: Category,
    pub color_hex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opcode: Option<String>,
    pub segments: Vec<Segment>,
    pub highlighted: bool,
    /// Set for opcodes outside the catalog, drawn as plain text.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

/// A block or slot to emphasize. `path` is relative to the rendered
/// fragment; `slot: None` highlights the whole block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Highlight {
    pub path: Vec<BlockStep>,
    pub slot: Option<String>,
}

impl Highlight {
    pub fn block(path: Vec<BlockStep>) -> Self {
        Highlight { path, slot: None }
    }

    pub fn slot(path: Vec<BlockStep>, slot: impl Into<String>) -> Self {
        Highlight {
            path,
            slot: Some(slot.into()),
        }
    }
}

/// One spec per top-level block of the fragment.
pub fn to_render_spec<F: AsBlocks + ?Sized>(fragment: &F, highlights: &[Highlight]) -> Vec<RenderSpec> {
    seq_specs(fragment.as_blocks(), highlights)
}

fn seq_specs(blocks: &[BlockNode], highlights: &[Highlight]) -> Vec<RenderSpec> {
    blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut own = Vec::new();
            let mut nested = Vec::new();
            for h in highlights {
                let Some((first, rest)) = h.path.split_first() else { continue };
                if first.index != i {
                    continue;
                }
                match first.substack {
                    None if rest.is_empty() => own.push(h.slot.clone()),
                    Some(k) if !rest.is_empty() => nested.push((
                        k,
                        Highlight {
                            path: rest.to_vec(),
                            slot: h.slot.clone(),
                        },
                    )),
                    _ => {}
                }
            }
            block_spec(b, &own, &nested)
        })
        .collect()
}

/// `own` holds highlights on this block (`None` for the whole block);
/// `nested` holds highlights inside substack `k`, relative to it.
fn block_spec(block: &BlockNode, own: &[Option<String>], nested: &[(usize, Highlight)]) -> RenderSpec {
    let whole = own.iter().any(Option::is_none);
    let slot_lit = |name: &str| own.iter().any(|h| h.as_deref() == Some(name));
    let entry = catalog::lookup(&block.opcode);

    let (shape, category, mut segments, fallback) = match entry {
        _ if is_argument(block) => {
            let name = block.field("VALUE").map_or(String::new(), |f| f.value.clone());
            let shape = if block.opcode == "argument_reporter_boolean" {
                Shape::Boolean
            } else {
                Shape::Reporter
            };
            let segment = Segment::Slot {
                name: "VALUE".into(),
                value: name,
                bracket: Bracket::Plain,
                highlighted: slot_lit("VALUE"),
            };
            (shape.into(), Category::MyBlocks, vec![segment], false)
        }
        Some(e) if e.menu => {
            let segment = Segment::Slot {
                name: block.fields.first().map_or(String::new(), |f| f.name.clone()),
                value: menu_value(block).to_string(),
                bracket: Bracket::Menu,
                highlighted: false,
            };
            (RenderShape::Reporter, e.category, vec![segment], false)
        }
        Some(e) if e.variadic => (e.shape.into(), e.category, custom_segments(block, &slot_lit), false),
        Some(e) => (e.shape.into(), e.category, template_segments(e, block, &slot_lit), false),
        None => {
            let shape = if block.substacks.is_empty() {
                RenderShape::Stack
            } else {
                RenderShape::CBlock
            };
            let text = Segment::Text {
                text: unknown_label(block),
            };
            (shape, Category::Unknown, vec![text], true)
        }
    };

    if has_body(block) {
        for (k, seq) in block.substacks.iter().enumerate() {
            if k > 0 {
                let word = entry.and_then(|e| e.else_label).unwrap_or("else");
                segments.push(Segment::Text { text: word.into() });
            }
            let inner: Vec<Highlight> = nested
                .iter()
                .filter(|(sub, _)| *sub == k)
                .map(|(_, h)| h.clone())
                .collect();
            let blocks = seq_specs(&seq.blocks, &inner);
            segments.push(Segment::Substack { blocks });
        }
    }

    RenderSpec {
        spec_version: SPEC_VERSION,
        shape,
        category,
        color_hex: category.color_hex().to_string(),
        opcode: Some(block.opcode.clone()),
        segments,
        highlighted: whole,
        fallback,
    }
}

fn template_segments(entry: &CatalogEntry, block: &BlockNode, lit: &dyn Fn(&str) -> bool) -> Vec<Segment> {
    let mut segments = Vec::new();
    for token in template_tokens(entry.template) {
        match token {
            Token::Text(t) => segments.push(Segment::Text { text: t.to_string() }),
            Token::Slot(name) => {
                let kind = entry.slot(name).map_or(SlotKind::Text, |s| s.kind);
                segments.push(slot_segment(block, name, kind, lit(name)));
            }
        }
    }
    segments
}

fn slot_segment(block: &BlockNode, name: &str, kind: SlotKind, highlighted: bool) -> Segment {
    let slot = |value: String, bracket: Bracket| Segment::Slot {
        name: name.to_string(),
        value,
        bracket,
        highlighted,
    };
    match kind {
        SlotKind::Field => slot(
            block.field(name).map_or(String::new(), |f| f.value.clone()),
            Bracket::Dropdown,
        ),
        SlotKind::Prototype => match block.input(name).map(|s| &s.value) {
            Some(InputValue::Expression(proto)) => slot(custom_label(proto), Bracket::Plain),
            _ => slot(String::new(), Bracket::Plain),
        },
        _ => match block.input(name).map(|s| &s.value) {
            Some(value) => value_segment(name, value, kind, highlighted),
            None => slot(String::new(), empty_bracket(kind)),
        },
    }
}

fn value_segment(name: &str, value: &InputValue, kind: SlotKind, highlighted: bool) -> Segment {
    let slot = |value: String, bracket: Bracket| Segment::Slot {
        name: name.to_string(),
        value,
        bracket,
        highlighted,
    };
    match value {
        InputValue::Literal(lit) => {
            let (bracket, text) = literal_form(lit);
            slot(text, bracket)
        }
        InputValue::Variable(r) | InputValue::List(r) => slot(r.name.clone(), Bracket::Round),
        InputValue::Broadcast(r) => slot(r.name.clone(), Bracket::Menu),
        InputValue::Empty => slot(String::new(), empty_bracket(kind)),
        InputValue::Expression(b) => {
            let mut spec = block_spec(b, &[], &[]);
            if !spec.fallback && !matches!(spec.shape, RenderShape::Boolean) {
                spec.shape = RenderShape::Reporter;
            }
            Segment::Block {
                name: name.to_string(),
                spec: Box::new(spec),
                highlighted,
            }
        }
    }
}

fn custom_segments(block: &BlockNode, lit: &dyn Fn(&str) -> bool) -> Vec<Segment> {
    let Some(code) = block.proccode() else {
        return vec![Segment::Text {
            text: unknown_label(block),
        }];
    };
    let ids = block.argument_ids();
    let names = argument_names(block);
    let parts = proccode_parts(code);
    let mut segments = Vec::new();
    let mut arg = 0usize;
    let last = parts.len().saturating_sub(1);
    for (i, part) in parts.into_iter().enumerate() {
        match part {
            ProcPart::Text(t) => {
                let mut t = t;
                if i == 0 {
                    t = t.trim_start();
                }
                if i == last {
                    t = t.trim_end();
                }
                if !t.is_empty() {
                    segments.push(Segment::Text { text: t.to_string() });
                }
            }
            ProcPart::Arg(boolean) => {
                let kind = if boolean { SlotKind::Boolean } else { SlotKind::Text };
                let bracket = if boolean { Bracket::Angle } else { Bracket::Round };
                let id = ids.get(arg).map(String::as_str);
                let display = names.get(arg).map(String::as_str);
                arg += 1;
                let segment = match (id, display) {
                    (Some(_), Some(name)) if block.opcode == "procedures_prototype" => Segment::Slot {
                        name: name.to_string(),
                        value: name.to_string(),
                        bracket,
                        highlighted: lit(name),
                    },
                    (Some(id), _) => match block.input(id) {
                        Some(slot) => value_segment(id, &slot.value, kind, lit(id)),
                        None => Segment::Slot {
                            name: id.to_string(),
                            value: String::new(),
                            bracket: empty_bracket(kind),
                            highlighted: lit(id),
                        },
                    },
                    (None, _) => Segment::Slot {
                        name: String::new(),
                        value: String::new(),
                        bracket: empty_bracket(kind),
                        highlighted: false,
                    },
                };
                segments.push(segment);
            }
        }
    }
    segments
}

/// Stack top-level specs into one composite. Hats may only come first.
pub fn stitch(specs: Vec<RenderSpec>) -> Result<RenderSpec, RenderError> {
    if let Some(pos) = specs.iter().skip(1).position(|s| s.shape == RenderShape::Hat) {
        return Err(RenderError::HatNotFirst(pos + 1));
    }
    let category = specs.first().map_or(Category::Unknown, |s| s.category);
    let highlighted = specs.iter().any(|s| s.highlighted);
    Ok(RenderSpec {
        spec_version: SPEC_VERSION,
        shape: RenderShape::Script,
        category,
        color_hex: category.color_hex().to_string(),
        opcode: None,
        segments: vec![Segment::Substack { blocks: specs }],
        highlighted,
        fallback: false,
    })
}

impl RenderSpec {
    /// Text lines reconstructed from the segments; equals [`to_text`] of
    /// the block the spec was built from.
    pub fn text_lines(&self) -> Vec<String> {
        if self.shape == RenderShape::Script {
            return self
                .segments
                .iter()
                .flat_map(|s| match s {
                    Segment::Substack { blocks } => blocks.iter().flat_map(RenderSpec::text_lines).collect(),
                    _ => Vec::new(),
                })
                .collect();
        }
        let mut lines = Vec::new();
        let mut buf = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Text { text } => buf.push_str(text),
                Segment::Slot { value, bracket, .. } => buf.push_str(&bracket.wrap(value)),
                Segment::Block { spec, .. } => buf.push_str(&spec.inline_text()),
                Segment::Substack { blocks } => {
                    lines.push(self.wrap_line(std::mem::take(&mut buf)));
                    for b in blocks {
                        lines.extend(b.text_lines().into_iter().map(|l| format!("{INDENT}{l}")));
                    }
                }
            }
        }
        if !buf.is_empty() || lines.is_empty() {
            lines.push(self.wrap_line(buf));
        }
        if self.shape == RenderShape::CBlock {
            lines.push("end".to_string());
        }
        lines
    }

    fn wrap_line(&self, line: String) -> String {
        if self.is_menu() {
            return line;
        }
        match self.shape {
            RenderShape::Reporter if !self.fallback => format!("({line})"),
            RenderShape::Boolean => format!("<{line}>"),
            _ => line,
        }
    }

    fn is_menu(&self) -> bool {
        matches!(self.segments.as_slice(), [Segment::Slot { bracket: Bracket::Menu, .. }])
    }

    fn inline_text(&self) -> String {
        let line = self.text_lines().join(" ");
        if self.fallback {
            format!("({line})")
        } else {
            line
        }
    }

    /// Whether any slot or block in the tree is highlighted.
    pub fn any_highlight(&self) -> bool {
        self.highlighted
            || self.segments.iter().any(|s| match s {
                Segment::Slot { highlighted, .. } => *highlighted,
                Segment::Block { highlighted, spec, .. } => *highlighted || spec.any_highlight(),
                Segment::Substack { blocks } => blocks.iter().any(RenderSpec::any_highlight),
                Segment::Text { .. } => false,
            })
    }

    /// Names of highlighted slots on this block (not nested ones).
    pub fn highlighted_slots(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot {
                    name, highlighted: true, ..
                }
                | Segment::Block {
                    name, highlighted: true, ..
                } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3::{FieldSlot, InputSlot, Literal, LiteralKind};

    fn lit(kind: LiteralKind, v: &str) -> InputValue {
        InputValue::Literal(Literal { kind, value: v.into() })
    }

    fn with_input(mut b: BlockNode, name: &str, value: InputValue) -> BlockNode {
        b.inputs.push(InputSlot {
            name: name.into(),
            value,
            obscured: None,
        });
        b
    }

    fn move_steps(n: &str) -> BlockNode {
        with_input(BlockNode::new("motion_movesteps"), "STEPS", lit(LiteralKind::Number, n))
    }

    fn touching(what: &str) -> BlockNode {
        let mut menu = BlockNode::new("sensing_touchingobjectmenu");
        menu.shadow = true;
        menu.fields.push(FieldSlot {
            name: "TOUCHINGOBJECTMENU".into(),
            value: what.into(),
            id: None,
        });
        with_input(
            BlockNode::new("sensing_touchingobject"),
            "TOUCHINGOBJECTMENU",
            InputValue::Expression(Box::new(menu)),
        )
    }

    fn sample() -> Vec<BlockNode> {
        let mut if_else = with_input(
            BlockNode::new("control_if_else"),
            "CONDITION",
            InputValue::Expression(Box::new(touching("Wall"))),
        );
        if_else.substacks.push(BlockSeq::new(vec![move_steps("-10")]));
        if_else.substacks.push(BlockSeq::new(vec![move_steps("10")]));
        let mut set = BlockNode::new("data_setvariableto");
        set.fields.push(FieldSlot {
            name: "VARIABLE".into(),
            value: "score".into(),
            id: None,
        });
        let set = with_input(set, "VALUE", lit(LiteralKind::Text, "0"));
        let say = with_input(BlockNode::new("looks_say"), "MESSAGE", lit(LiteralKind::Text, "Hello!"));
        vec![BlockNode::new("event_whenflagclicked"), set, if_else, say, BlockNode::new("pen_clear")]
    }

    #[test]
    fn simple_stack_block() {
        assert_eq!(to_text(&move_steps("3")), vec!["move (3) steps"]);
    }

    #[test]
    fn hat_and_c_blocks() {
        let lines = to_text(&sample());
        assert_eq!(lines[0], "when green flag clicked");
        assert_eq!(lines[1], "set [score v] to [0]");
        assert!(lines[2].starts_with("if <touching"), "{}", lines[2]);
        assert_eq!(lines[3], "  move (-10) steps");
        assert_eq!(lines[4], "else");
        assert_eq!(lines[5], "  move (10) steps");
        assert_eq!(lines[6], "end");
        assert_eq!(lines[7], "say [Hello!]");
    }

    #[test]
    fn unknown_opcode_falls_back() {
        let specs = to_render_spec(&BlockNode::new("pen_clear"), &[]);
        assert!(specs[0].fallback);
        assert_eq!(specs[0].shape, RenderShape::Stack);
        assert!(to_text(&BlockNode::new("pen_clear"))[0].starts_with("[unknown: pen_clear]"));
    }

    #[test]
    fn spec_text_agrees_with_to_text() {
        let blocks = sample();
        let specs = to_render_spec(&blocks, &[]);
        let lines: Vec<String> = specs.iter().flat_map(RenderSpec::text_lines).collect();
        assert_eq!(lines, to_text(&blocks));
    }

    #[test]
    fn slot_highlight_marks_only_that_slot() {
        let specs = to_render_spec(&move_steps("3"), &[Highlight::slot(vec![BlockStep::at(0)], "STEPS")]);
        assert_eq!(specs[0].highlighted_slots(), vec!["STEPS"]);
        assert!(!specs[0].highlighted);
    }

    #[test]
    fn nested_highlight_reaches_substack() {
        let blocks = sample();
        let path = vec![BlockStep::into_substack(2, 1), BlockStep::at(0)];
        let specs = to_render_spec(&blocks, &[Highlight::block(path)]);
        assert!(specs[2].any_highlight());
        assert!(!specs[1].any_highlight());
        match &specs[2].segments.iter().filter(|s| matches!(s, Segment::Substack { .. })).nth(1) {
            Some(Segment::Substack { blocks }) => assert!(blocks[0].highlighted),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn boolean_reporter_shape() {
        let specs = to_render_spec(&touching("Wall"), &[]);
        assert_eq!(specs[0].shape, RenderShape::Boolean);
        assert!(specs[0].text_lines()[0].starts_with('<'));
    }

    #[test]
    fn empty_fragment() {
        let empty: Vec<BlockNode> = Vec::new();
        assert!(to_text(&empty).is_empty());
        assert!(to_render_spec(&empty, &[]).is_empty());
        let script = stitch(Vec::new()).unwrap();
        assert!(script.text_lines().is_empty());
    }

    #[test]
    fn stitch_requires_leading_hat() {
        let blocks = sample();
        let specs = to_render_spec(&blocks, &[]);
        let joined = stitch(specs.clone()).unwrap();
        assert_eq!(joined.shape, RenderShape::Script);
        assert_eq!(joined.text_lines(), to_text(&blocks));
        let mut bad = specs;
        bad.swap(0, 1);
        assert_eq!(stitch(bad), Err(RenderError::HatNotFirst(1)));
    }

    #[test]
    fn spec_json_shape() {
        let v = serde_json::to_value(&to_render_spec(&move_steps("3"), &[])[0]).unwrap();
        assert_eq!(v["specVersion"], 1);
        assert_eq!(v["shape"], "STACK");
        assert_eq!(v["segments"][1]["type"], "slot");
    }

    #[test]
    fn event_titles() {
        assert_eq!(event_title(None), "Loose Blocks");
        assert_eq!(event_title(Some(&BlockNode::new("event_whenflagclicked"))), "When Green Flag Clicked");
    }
}
