//! In-memory model of a Scratch 3.0 project.
//!
//! The project document stores blocks as a flat table linked by `next` and
//! `parent` ids. Loading resolves those links into ordered [`BlockSeq`]s
//! grouped into [`Script`]s, one per top-level stack. Everything that only
//! matters to the Scratch editor (block ids, workspace coordinates, comments,
//! monitors, costumes, sounds) is carried along as source metadata so the
//! document can be written back, but it never participates in comparison.

pub mod catalog;
mod load;
mod save;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use load::{load_project, load_sb3, Asset, Sb3Archive};
pub use save::{serialize_project, serialize_project_pretty, write_sb3};

/// Opcode used for the trigger of stacks that do not start with a hat block.
pub const HEADLESS: &str = "HEADLESS";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum LoadError {
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at block {block_id}: {reason}")]
    SchemaViolation { block_id: String, reason: String },
    #[error("invalid project: {0}")]
    InvalidProject(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectAst {
    pub targets: Vec<Target>,
    /// broadcast id -> message name
    pub broadcasts: BTreeMap<String, String>,
    /// Top-level document keys other than `targets` (monitors, extensions,
    /// meta, anything unknown), kept verbatim for round-tripping.
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Target {
    pub name: String,
    pub is_stage: bool,
    pub scripts: Vec<Script>,
    pub variables: BTreeMap<String, Variable>,
    pub lists: BTreeMap<String, List>,
    /// Costumes, sounds, layer order, coordinates, comments and similar
    /// editor state.
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Variable {
    pub name: String,
    pub value: Value,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cloud: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct List {
    pub name: String,
    pub items: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Script {
    pub trigger: EventKey,
    /// The hat block itself; `None` for headless stacks.
    pub hat: Option<BlockNode>,
    pub body: BlockSeq,
    #[serde(default, skip_serializing_if = "Placement::is_empty")]
    pub placement: Placement,
}

/// Workspace position of a top-level stack.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub x: Option<f64>,
    pub y: Option<f64>,
}

impl Placement {
    pub fn is_empty(&self) -> bool {
        self.x.is_none() && self.y.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventKey {
    pub hat_opcode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<String>,
}

impl EventKey {
    pub fn headless() -> Self {
        EventKey {
            hat_opcode: HEADLESS.to_string(),
            discriminator: None,
        }
    }

    pub fn is_headless(&self) -> bool {
        self.hat_opcode == HEADLESS
    }

    /// Derive the key from a hat block. The discriminator is the value of
    /// the hat's parameterizing field (message, key, backdrop, ...).
    pub fn from_hat(hat: &BlockNode) -> Self {
        let discriminator = catalog::hat_discriminator(&hat.opcode).and_then(|slot| {
            if slot == catalog::PROCCODE {
                hat_proccode(hat)
            } else {
                hat.field(slot).map(|f| f.value.clone())
            }
        });
        EventKey {
            hat_opcode: hat.opcode.clone(),
            discriminator,
        }
    }
}

fn hat_proccode(hat: &BlockNode) -> Option<String> {
    match hat.input("custom_block").map(|s| &s.value) {
        Some(InputValue::Expression(proto)) => proto.proccode().map(str::to_string),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockSeq {
    pub blocks: Vec<BlockNode>,
}

impl BlockSeq {
    pub fn new(blocks: Vec<BlockNode>) -> Self {
        BlockSeq { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of blocks including substacks and nested expressions.
    pub fn block_count(&self) -> usize {
        self.blocks.iter().map(BlockNode::block_count).sum()
    }
}

impl From<Vec<BlockNode>> for BlockSeq {
    fn from(blocks: Vec<BlockNode>) -> Self {
        BlockSeq { blocks }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockNode {
    pub opcode: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputSlot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldSlot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub substacks: Vec<BlockSeq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub shadow: bool,
    #[serde(default, skip_serializing_if = "BlockMeta::is_empty")]
    pub meta: BlockMeta,
}

/// Editor bookkeeping attached to a block.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl BlockMeta {
    pub fn is_empty(&self) -> bool {
        self.id.is_none() && self.comment.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InputSlot {
    pub name: String,
    pub value: InputValue,
    /// Shadow hidden underneath a reporter dropped into the slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obscured: Option<Box<InputValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum InputValue {
    Literal(Literal),
    Expression(Box<BlockNode>),
    Variable(EntityRef),
    List(EntityRef),
    Broadcast(EntityRef),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Literal {
    pub kind: LiteralKind,
    pub value: String,
}

/// Primitive codes of the compressed input encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LiteralKind {
    Number,
    PositiveNumber,
    WholeNumber,
    Integer,
    Angle,
    Color,
    Text,
}

impl LiteralKind {
    pub fn code(self) -> u64 {
        match self {
            LiteralKind::Number => 4,
            LiteralKind::PositiveNumber => 5,
            LiteralKind::WholeNumber => 6,
            LiteralKind::Integer => 7,
            LiteralKind::Angle => 8,
            LiteralKind::Color => 9,
            LiteralKind::Text => 10,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            4 => LiteralKind::Number,
            5 => LiteralKind::PositiveNumber,
            6 => LiteralKind::WholeNumber,
            7 => LiteralKind::Integer,
            8 => LiteralKind::Angle,
            9 => LiteralKind::Color,
            10 => LiteralKind::Text,
            _ => return None,
        })
    }

    /// Shadow opcode that expands to this primitive, with its field name.
    pub fn shadow_opcode(self) -> (&'static str, &'static str) {
        match self {
            LiteralKind::Number => ("math_number", "NUM"),
            LiteralKind::PositiveNumber => ("math_positive_number", "NUM"),
            LiteralKind::WholeNumber => ("math_whole_number", "NUM"),
            LiteralKind::Integer => ("math_integer", "NUM"),
            LiteralKind::Angle => ("math_angle", "NUM"),
            LiteralKind::Color => ("colour_picker", "COLOUR"),
            LiteralKind::Text => ("text", "TEXT"),
        }
    }

    pub fn from_shadow_opcode(opcode: &str) -> Option<Self> {
        Some(match opcode {
            "math_number" => LiteralKind::Number,
            "math_positive_number" => LiteralKind::PositiveNumber,
            "math_whole_number" => LiteralKind::WholeNumber,
            "math_integer" => LiteralKind::Integer,
            "math_angle" => LiteralKind::Angle,
            "colour_picker" => LiteralKind::Color,
            "text" => LiteralKind::Text,
            _ => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, LiteralKind::Color | LiteralKind::Text)
    }
}

/// Reference to a variable, list or broadcast by display name and id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldSlot {
    pub name: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

/// Namespaces subject to renaming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EntityKind {
    Variable,
    List,
    Broadcast,
    Procedure,
}

impl EntityKind {
    /// Field names that carry a reference of this kind.
    pub fn from_field(field: &str) -> Option<Self> {
        match field {
            "VARIABLE" => Some(EntityKind::Variable),
            "LIST" => Some(EntityKind::List),
            "BROADCAST_OPTION" => Some(EntityKind::Broadcast),
            _ => None,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            EntityKind::Variable => "v",
            EntityKind::List => "l",
            EntityKind::Broadcast => "b",
            EntityKind::Procedure => "p",
        }
    }
}

impl BlockNode {
    pub fn new(opcode: impl Into<String>) -> Self {
        BlockNode {
            opcode: opcode.into(),
            inputs: Vec::new(),
            fields: Vec::new(),
            substacks: Vec::new(),
            mutation: None,
            shadow: false,
            meta: BlockMeta::default(),
        }
    }

    pub fn input(&self, name: &str) -> Option<&InputSlot> {
        self.inputs.iter().find(|s| s.name == name)
    }

    pub fn input_mut(&mut self, name: &str) -> Option<&mut InputSlot> {
        self.inputs.iter_mut().find(|s| s.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&FieldSlot> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut FieldSlot> {
        self.fields.iter_mut().find(|f| f.name == name)
    }

    pub fn mutation_str(&self, key: &str) -> Option<&str> {
        self.mutation.as_ref()?.get(key)?.as_str()
    }

    pub fn proccode(&self) -> Option<&str> {
        self.mutation_str("proccode")
    }

    /// Argument ids of a procedure prototype or call, in declaration order.
    pub fn argument_ids(&self) -> Vec<String> {
        self.mutation_str("argumentids")
            .and_then(|s| serde_json::from_str::<Vec<String>>(s).ok())
            .unwrap_or_default()
    }

    pub fn set_argument_ids(&mut self, ids: &[String]) {
        if let Some(m) = self.mutation.as_mut() {
            m.insert(
                "argumentids".into(),
                Value::String(serde_json::to_string(ids).unwrap_or_else(|_| "[]".into())),
            );
        }
    }

    pub fn block_count(&self) -> usize {
        1 + self
            .inputs
            .iter()
            .map(|s| match &s.value {
                InputValue::Expression(b) => b.block_count(),
                _ => 0,
            })
            .sum::<usize>()
            + self.substacks.iter().map(BlockSeq::block_count).sum::<usize>()
    }

    /// Visit this block and every nested block (expressions and substacks),
    /// depth first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a BlockNode)) {
        f(self);
        for slot in &self.inputs {
            if let InputValue::Expression(b) = &slot.value {
                b.walk(f);
            }
            if let Some(obscured) = &slot.obscured {
                if let InputValue::Expression(b) = obscured.as_ref() {
                    b.walk(f);
                }
            }
        }
        for seq in &self.substacks {
            for b in &seq.blocks {
                b.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut BlockNode)) {
        f(self);
        for slot in &mut self.inputs {
            if let InputValue::Expression(b) = &mut slot.value {
                b.walk_mut(f);
            }
            if let Some(InputValue::Expression(b)) = slot.obscured.as_deref_mut() {
                b.walk_mut(f);
            }
        }
        for seq in &mut self.substacks {
            for b in &mut seq.blocks {
                b.walk_mut(f);
            }
        }
    }

    /// Visit every input value in this block tree, including obscured
    /// shadows.
    pub fn walk_values_mut(&mut self, f: &mut impl FnMut(&mut InputValue)) {
        self.walk_mut(&mut |b| {
            for slot in &mut b.inputs {
                f(&mut slot.value);
                if let Some(obscured) = slot.obscured.as_deref_mut() {
                    f(obscured);
                }
            }
        });
    }
}

impl Script {
    pub fn new(hat: Option<BlockNode>, body: Vec<BlockNode>) -> Self {
        let trigger = hat
            .as_ref()
            .map(EventKey::from_hat)
            .unwrap_or_else(EventKey::headless);
        Script {
            trigger,
            hat,
            body: BlockSeq::new(body),
            placement: Placement::default(),
        }
    }

    /// Blocks in the script including the hat.
    pub fn block_count(&self) -> usize {
        self.hat.as_ref().map_or(0, BlockNode::block_count) + self.body.block_count()
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a BlockNode)) {
        if let Some(hat) = &self.hat {
            hat.walk(f);
        }
        for b in &self.body.blocks {
            b.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut BlockNode)) {
        if let Some(hat) = &mut self.hat {
            hat.walk_mut(f);
        }
        for b in &mut self.body.blocks {
            b.walk_mut(f);
        }
    }

    pub fn walk_values_mut(&mut self, f: &mut impl FnMut(&mut InputValue)) {
        if let Some(hat) = &mut self.hat {
            hat.walk_values_mut(f);
        }
        for b in &mut self.body.blocks {
            b.walk_values_mut(f);
        }
    }

    /// Recompute the trigger from the hat block.
    pub fn refresh_trigger(&mut self) {
        self.trigger = self
            .hat
            .as_ref()
            .map(EventKey::from_hat)
            .unwrap_or_else(EventKey::headless);
    }
}

impl Target {
    pub fn new(name: impl Into<String>, is_stage: bool) -> Self {
        Target {
            name: name.into(),
            is_stage,
            ..Default::default()
        }
    }

    pub fn block_count(&self) -> usize {
        self.scripts.iter().map(Script::block_count).sum()
    }

    pub fn variable_by_name(&self, name: &str) -> Option<(&String, &Variable)> {
        self.variables.iter().find(|(_, v)| v.name == name)
    }

    pub fn list_by_name(&self, name: &str) -> Option<(&String, &List)> {
        self.lists.iter().find(|(_, l)| l.name == name)
    }
}

impl ProjectAst {
    /// A project containing only an empty stage.
    pub fn empty() -> Self {
        ProjectAst {
            targets: vec![Target::new("Stage", true)],
            ..Default::default()
        }
    }

    pub fn stage(&self) -> Option<&Target> {
        self.targets.iter().find(|t| t.is_stage)
    }

    pub fn stage_mut(&mut self) -> Option<&mut Target> {
        self.targets.iter_mut().find(|t| t.is_stage)
    }

    pub fn sprites(&self) -> impl Iterator<Item = &Target> {
        self.targets.iter().filter(|t| !t.is_stage)
    }

    pub fn target(&self, name: &str) -> Option<&Target> {
        self.targets.iter().find(|t| t.name == name)
    }

    pub fn target_mut(&mut self, name: &str) -> Option<&mut Target> {
        self.targets.iter_mut().find(|t| t.name == name)
    }

    pub fn block_count(&self) -> usize {
        self.targets.iter().map(Target::block_count).sum()
    }

    pub fn script_count(&self) -> usize {
        self.targets.iter().map(|t| t.scripts.len()).sum()
    }

    /// Check the structural invariants a loaded or patched project must hold.
    pub fn validate(&self) -> Result<(), LoadError> {
        let stages = self.targets.iter().filter(|t| t.is_stage).count();
        if stages != 1 {
            return Err(LoadError::InvalidProject(format!(
                "expected exactly one stage, found {stages}"
            )));
        }
        let mut names = BTreeSet::new();
        for t in self.sprites() {
            if !names.insert(t.name.as_str()) {
                return Err(LoadError::InvalidProject(format!(
                    "duplicate sprite name {:?}",
                    t.name
                )));
            }
        }
        let mut ids = BTreeSet::new();
        for t in &self.targets {
            let mut var_names = BTreeSet::new();
            for v in t.variables.values() {
                if !var_names.insert(v.name.as_str()) {
                    return Err(LoadError::InvalidProject(format!(
                        "duplicate variable {:?} in {}",
                        v.name, t.name
                    )));
                }
            }
            for s in &t.scripts {
                let mut err = None;
                s.walk(&mut |b| {
                    if err.is_some() {
                        return;
                    }
                    if b.opcode.is_empty() {
                        err = Some(LoadError::InvalidProject("empty opcode".into()));
                    } else if let Some(id) = &b.meta.id {
                        if !ids.insert(id.clone()) {
                            err = Some(LoadError::SchemaViolation {
                                block_id: id.clone(),
                                reason: "duplicate block id".into(),
                            });
                        }
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
            }
        }
        Ok(())
    }

    /// Copy with every block id and comment link removed.
    pub fn without_block_ids(&self) -> ProjectAst {
        let mut p = self.clone();
        for t in &mut p.targets {
            for s in &mut t.scripts {
                s.walk_mut(&mut |b| b.meta = BlockMeta::default());
            }
        }
        p
    }

    /// Give every block without an id (or with a duplicate one) a fresh id
    /// that is unique across the whole project.
    pub fn assign_fresh_ids(&mut self) {
        let mut used = BTreeSet::new();
        for t in &self.targets {
            for s in &t.scripts {
                s.walk(&mut |b| {
                    if let Some(id) = &b.meta.id {
                        used.insert(id.clone());
                    }
                });
            }
            used.extend(t.variables.keys().cloned());
            used.extend(t.lists.keys().cloned());
        }
        used.extend(self.broadcasts.keys().cloned());
        let mut seen = BTreeSet::new();
        let mut counter = 0usize;
        for t in &mut self.targets {
            for s in &mut t.scripts {
                s.walk_mut(&mut |b| {
                    let keep = matches!(&b.meta.id, Some(id) if seen.insert(id.clone()));
                    if !keep {
                        let id = fresh_id(&mut counter, &used, "blk");
                        used.insert(id.clone());
                        seen.insert(id.clone());
                        b.meta.id = Some(id);
                    }
                });
            }
        }
    }

    /// Every id in use: blocks, variables, lists, broadcasts.
    pub fn used_ids(&self) -> BTreeSet<String> {
        let mut used = BTreeSet::new();
        for t in &self.targets {
            for s in &t.scripts {
                s.walk(&mut |b| {
                    if let Some(id) = &b.meta.id {
                        used.insert(id.clone());
                    }
                });
            }
            used.extend(t.variables.keys().cloned());
            used.extend(t.lists.keys().cloned());
        }
        used.extend(self.broadcasts.keys().cloned());
        used
    }
}

/// Next id of the form `<prefix>-<n>` not present in `used`.
pub fn fresh_id(counter: &mut usize, used: &BTreeSet<String>, prefix: &str) -> String {
    loop {
        *counter += 1;
        let id = format!("{prefix}-{counter}");
        if !used.contains(&id) {
            return id;
        }
    }
}
