//! Structural comparison of a student project against a reference.
//!
//! Both projects are normalized, sprites are paired by name or trigger
//! similarity, scripts by trigger, and the blocks of paired scripts by a
//! minimum-cost alignment. Differences become [`DiffItem`]s ordered from
//! most to least critical.

mod align;
mod matching;

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use align::{align_blocks_lcs, EditOp, EditScript};
pub use matching::{jaccard, match_scripts_by_event, match_sprites, ScriptMatch, SpritePair, SPRITE_SIMILARITY_THRESHOLD};

use crate::normalize::{self, NormalizeError, NormalizedAst};
use crate::render;
use crate::sb3::catalog::{self, SlotKind};
use crate::sb3::{BlockNode, EntityKind, EventKey, ProjectAst, Script, Target};
use align::Pair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Level {
    Module,
    Script,
    Block,
    Parameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    Missing,
    Extra,
    Modified,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Module => "MODULE",
            Level::Script => "SCRIPT",
            Level::Block => "BLOCK",
            Level::Parameter => "PARAMETER",
        })
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Missing => "MISSING",
            Kind::Extra => "EXTRA",
            Kind::Modified => "MODIFIED",
        })
    }
}

/// One step into a script: the block at `index` of the current sequence,
/// then, if `substack` is set, into that substack of the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockStep {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substack: Option<usize>,
}

impl BlockStep {
    pub fn at(index: usize) -> Self {
        BlockStep { index, substack: None }
    }

    pub fn into_substack(index: usize, substack: usize) -> Self {
        BlockStep {
            index,
            substack: Some(substack),
        }
    }
}

/// Location of a difference. Block paths index the script as a sequence
/// whose first element is the hat block, when there is one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiffPath {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprite_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_key: Option<EventKey>,
    /// Position among the sprite's scripts with the same trigger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_ordinal: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_path: Option<Vec<BlockStep>>,
}

impl fmt::Display for DiffPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.sprite_name.as_deref().unwrap_or("*"))?;
        if let Some(key) = &self.event_key {
            write!(f, "/{}", key.hat_opcode)?;
            if let Some(d) = &key.discriminator {
                write!(f, ":{d}")?;
            }
        }
        if let Some(n) = self.script_ordinal {
            write!(f, "#{n}")?;
        }
        if let Some(path) = &self.block_path {
            let steps: Vec<String> = path
                .iter()
                .map(|s| match s.substack {
                    Some(k) => format!("{}:{k}", s.index),
                    None => s.index.to_string(),
                })
                .collect();
            write!(f, "/{}", steps.join("."))?;
        }
        Ok(())
    }
}

/// A script in one of the original (not normalized) projects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptRef {
    pub target: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
#[allow(clippy::large_enum_variant)]
pub enum Fragment {
    Sprite { name: String, scripts: Vec<Script> },
    Script { script: Script },
    Blocks { blocks: Vec<BlockNode> },
}

impl Fragment {
    pub fn block_count(&self) -> usize {
        match self {
            Fragment::Sprite { scripts, .. } => scripts.iter().map(Script::block_count).sum(),
            Fragment::Script { script } => script.block_count(),
            Fragment::Blocks { blocks } => blocks.iter().map(BlockNode::block_count).sum(),
        }
    }

    /// The blocks of the fragment as one sequence (hat first for scripts).
    pub fn blocks(&self) -> Vec<BlockNode> {
        match self {
            Fragment::Sprite { scripts, .. } => scripts.iter().flat_map(script_blocks).collect(),
            Fragment::Script { script } => script_blocks(script),
            Fragment::Blocks { blocks } => blocks.clone(),
        }
    }

    pub fn text(&self) -> Vec<String> {
        match self {
            Fragment::Sprite { scripts, .. } => scripts.iter().flat_map(render::script_text).collect(),
            Fragment::Script { script } => render::script_text(script),
            Fragment::Blocks { blocks } => render::to_text(blocks),
        }
    }

    fn walk_blocks(&self, f: &mut impl FnMut(&BlockNode)) {
        match self {
            Fragment::Sprite { scripts, .. } => scripts.iter().for_each(|s| s.walk(f)),
            Fragment::Script { script } => script.walk(f),
            Fragment::Blocks { blocks } => blocks.iter().for_each(|b| b.walk(f)),
        }
    }

    fn relabel(&mut self, names: &dyn Fn(EntityKind, &str) -> Option<String>) {
        let script = |s: &mut Script| {
            if let Some(h) = s.hat.as_mut() {
                normalize::relabel_block(h, names);
            }
            for b in &mut s.body.blocks {
                normalize::relabel_block(b, names);
            }
            s.refresh_trigger();
        };
        match self {
            Fragment::Sprite { scripts, .. } => scripts.iter_mut().for_each(script),
            Fragment::Script { script: s } => script(s),
            Fragment::Blocks { blocks } => blocks.iter_mut().for_each(|b| normalize::relabel_block(b, names)),
        }
    }
}

/// A changed parameter, as display text on each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlotChange {
    pub slot: String,
    pub student: String,
    pub teacher: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiffItem {
    pub id: String,
    pub level: Level,
    pub kind: Kind,
    pub severity: usize,
    /// Where the difference is in the student project; for missing
    /// elements, where they belong.
    pub location: DiffPath,
    pub teacher_location: DiffPath,
    pub message: String,
    /// Title of the script the item is in, e.g. `When Green Flag Clicked`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_title: Option<String>,
    pub student_fragment: Option<Fragment>,
    pub teacher_fragment: Option<Fragment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changed_slots: Vec<SlotChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_source: Option<ScriptRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_source: Option<ScriptRef>,
}

impl DiffItem {
    fn new(level: Level, kind: Kind, location: DiffPath, teacher_location: DiffPath) -> Self {
        DiffItem {
            id: String::new(),
            level,
            kind,
            severity: 0,
            location,
            teacher_location,
            message: String::new(),
            script_title: None,
            student_fragment: None,
            teacher_fragment: None,
            changed_slots: Vec::new(),
            student_source: None,
            teacher_source: None,
        }
    }

    /// Size used for ranking within a tier.
    pub fn fragment_size(&self) -> usize {
        let s = self.student_fragment.as_ref().map_or(0, Fragment::block_count);
        let t = self.teacher_fragment.as_ref().map_or(0, Fragment::block_count);
        match self.kind {
            Kind::Missing => t,
            Kind::Extra => s,
            Kind::Modified => s.max(t),
        }
    }

    /// Rank tier: missing before extra, coarse levels before fine ones.
    pub fn tier(&self) -> u8 {
        match (self.level, self.kind) {
            (Level::Module, Kind::Missing) => 0,
            (Level::Module, _) => 1,
            (Level::Script, Kind::Missing) => 2,
            (Level::Script, _) => 3,
            (Level::Block, Kind::Missing) => 4,
            (Level::Block, _) => 5,
            (Level::Parameter, _) => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SuppressReason {
    /// Both sides agree after local normalization.
    Equivalent,
    /// Involves blocks outside the catalog; no suggestion is made.
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suppressed {
    pub item: DiffItem,
    pub reason: SuppressReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiffReport {
    pub items: Vec<DiffItem>,
    pub suppressed: Vec<Suppressed>,
    pub functionally_equivalent: bool,
}

impl DiffReport {
    pub fn item(&self, id: &str) -> Option<&DiffItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("student project: {0}")]
    Student(NormalizeError),
    #[error("teacher project: {0}")]
    Teacher(NormalizeError),
}

/// Hat (if any) followed by the body.
pub fn script_blocks(script: &Script) -> Vec<BlockNode> {
    script.hat.iter().chain(&script.body.blocks).cloned().collect()
}

/// Both projects normalized, with the student's canonical names aligned to
/// the teacher's.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub student: NormalizedAst,
    pub teacher: NormalizedAst,
}

pub fn prepare(student: &ProjectAst, teacher: &ProjectAst) -> Result<Comparison, DiffError> {
    let mut s = normalize::normalize(student).map_err(DiffError::Student)?;
    let t = normalize::normalize(teacher).map_err(DiffError::Teacher)?;
    matching::reconcile(&mut s, &t);
    Ok(Comparison { student: s, teacher: t })
}

/// Compare a student project against the teacher's reference.
pub fn diff_projects(student: &ProjectAst, teacher: &ProjectAst) -> Result<DiffReport, DiffError> {
    Ok(prepare(student, teacher)?.report())
}

/// MODULE items: teacher sprites with no student counterpart and the
/// reverse. The stage always has a counterpart.
pub fn compare_modules(student: &NormalizedAst, teacher: &NormalizedAst) -> Vec<DiffItem> {
    let pairs = match_sprites(student, teacher);
    module_items(student, teacher, &pairs)
}

fn module_items(student: &NormalizedAst, teacher: &NormalizedAst, pairs: &[SpritePair]) -> Vec<DiffItem> {
    let mut items = Vec::new();
    for (j, t) in teacher.project.targets.iter().enumerate() {
        if t.is_stage || pairs.iter().any(|p| p.teacher == j) {
            continue;
        }
        let path = sprite_path(t);
        let mut item = DiffItem::new(Level::Module, Kind::Missing, path.clone(), path);
        item.teacher_fragment = Some(sprite_fragment(t));
        items.push(item);
    }
    for (i, s) in student.project.targets.iter().enumerate() {
        if s.is_stage || pairs.iter().any(|p| p.student == i) {
            continue;
        }
        let path = sprite_path(s);
        let mut item = DiffItem::new(Level::Module, Kind::Extra, path, DiffPath::default());
        item.student_fragment = Some(sprite_fragment(s));
        items.push(item);
    }
    items
}

fn sprite_path(t: &Target) -> DiffPath {
    DiffPath {
        sprite_name: Some(t.name.clone()),
        ..Default::default()
    }
}

fn sprite_fragment(t: &Target) -> Fragment {
    Fragment::Sprite {
        name: t.name.clone(),
        scripts: t.scripts.clone(),
    }
}

fn ordinal(target: &Target, index: usize) -> usize {
    let key = &target.scripts[index].trigger;
    target.scripts[..index].iter().filter(|s| &s.trigger == key).count()
}

fn script_path(target: &Target, index: usize) -> DiffPath {
    DiffPath {
        sprite_name: Some(target.name.clone()),
        event_key: Some(target.scripts[index].trigger.clone()),
        script_ordinal: Some(ordinal(target, index)),
        block_path: None,
    }
}

fn with_block_path(base: &DiffPath, path: Vec<BlockStep>) -> DiffPath {
    DiffPath {
        block_path: Some(path),
        ..base.clone()
    }
}

fn extend(prefix: &[BlockStep], step: BlockStep) -> Vec<BlockStep> {
    let mut v = prefix.to_vec();
    v.push(step);
    v
}

/// Context for the block items of one matched script pair.
struct ScriptPairCtx {
    student: DiffPath,
    teacher: DiffPath,
    student_source: ScriptRef,
    teacher_source: ScriptRef,
}

impl ScriptPairCtx {
    fn item(&self, level: Level, kind: Kind, sp: Vec<BlockStep>, tp: Vec<BlockStep>) -> DiffItem {
        let mut item = DiffItem::new(level, kind, with_block_path(&self.student, sp), with_block_path(&self.teacher, tp));
        item.student_source = Some(self.student_source.clone());
        item.teacher_source = Some(self.teacher_source.clone());
        item
    }

    fn block_items(
        &self,
        pairs: &[Pair],
        s: &[BlockNode],
        t: &[BlockNode],
        sp: &[BlockStep],
        tp: &[BlockStep],
        out: &mut Vec<DiffItem>,
    ) {
        let (mut si, mut ti) = (0usize, 0usize);
        let mut k = 0;
        while k < pairs.len() {
            match &pairs[k] {
                Pair::Student(_) => {
                    let start = si;
                    while matches!(pairs.get(k), Some(Pair::Student(_))) {
                        si += 1;
                        k += 1;
                    }
                    let mut item = self.item(
                        Level::Block,
                        Kind::Extra,
                        extend(sp, BlockStep::at(start)),
                        extend(tp, BlockStep::at(ti)),
                    );
                    item.student_fragment = Some(Fragment::Blocks {
                        blocks: s[start..si].to_vec(),
                    });
                    out.push(item);
                }
                Pair::Teacher(_) => {
                    let start = ti;
                    while matches!(pairs.get(k), Some(Pair::Teacher(_))) {
                        ti += 1;
                        k += 1;
                    }
                    let mut item = self.item(
                        Level::Block,
                        Kind::Missing,
                        extend(sp, BlockStep::at(si)),
                        extend(tp, BlockStep::at(start)),
                    );
                    item.teacher_fragment = Some(Fragment::Blocks {
                        blocks: t[start..ti].to_vec(),
                    });
                    out.push(item);
                }
                Pair::Both {
                    student,
                    teacher,
                    changed,
                    substacks,
                } => {
                    let (a, b) = (&s[*student], &t[*teacher]);
                    if !changed.is_empty() {
                        let mut item = self.item(
                            Level::Parameter,
                            Kind::Modified,
                            extend(sp, BlockStep::at(si)),
                            extend(tp, BlockStep::at(ti)),
                        );
                        item.student_fragment = Some(Fragment::Blocks { blocks: vec![a.clone()] });
                        item.teacher_fragment = Some(Fragment::Blocks { blocks: vec![b.clone()] });
                        item.changed_slots = changed
                            .iter()
                            .map(|slot| SlotChange {
                                slot: slot.clone(),
                                student: String::new(),
                                teacher: String::new(),
                            })
                            .collect();
                        out.push(item);
                    }
                    let empty = Vec::new();
                    for (n, sub) in substacks.iter().enumerate() {
                        let sa = a.substacks.get(n).map_or(&empty, |x| &x.blocks);
                        let sb = b.substacks.get(n).map_or(&empty, |x| &x.blocks);
                        self.block_items(
                            sub,
                            sa,
                            sb,
                            &extend(sp, BlockStep::into_substack(si, n)),
                            &extend(tp, BlockStep::into_substack(ti, n)),
                            out,
                        );
                    }
                    si += 1;
                    ti += 1;
                    k += 1;
                }
            }
        }
    }
}

/// Suppress items that vanish under local normalization (EQUIVALENT) and
/// block-level items involving opcodes outside the catalog (UNCERTAIN).
pub fn filter_semantic_equivalences(items: Vec<DiffItem>) -> (Vec<DiffItem>, Vec<Suppressed>) {
    let mut kept = Vec::with_capacity(items.len());
    let mut suppressed = Vec::new();
    for item in items {
        if matches!(item.level, Level::Block | Level::Parameter) && has_unknown(&item) {
            suppressed.push(Suppressed {
                item,
                reason: SuppressReason::Uncertain,
            });
            continue;
        }
        if let (Some(s), Some(t)) = (&item.student_fragment, &item.teacher_fragment) {
            let local = |f: &Fragment| -> Vec<BlockNode> {
                f.blocks().into_iter().map(normalize::local_normalize).collect()
            };
            if local(s) == local(t) {
                suppressed.push(Suppressed {
                    item,
                    reason: SuppressReason::Equivalent,
                });
                continue;
            }
        }
        kept.push(item);
    }
    (kept, suppressed)
}

fn has_unknown(item: &DiffItem) -> bool {
    let mut unknown = false;
    for f in [&item.student_fragment, &item.teacher_fragment].into_iter().flatten() {
        f.walk_blocks(&mut |b| unknown |= !catalog::is_known(&b.opcode));
    }
    unknown
}

/// Order items by tier, then larger fragments first, then location; assign
/// severities 1..n and make ids unique.
pub fn rank_severity(mut items: Vec<DiffItem>) -> DiffReport {
    items.sort_by(|a, b| {
        (a.tier(), Reverse(a.fragment_size()), &a.location, &a.teacher_location, &a.id).cmp(&(
            b.tier(),
            Reverse(b.fragment_size()),
            &b.location,
            &b.teacher_location,
            &b.id,
        ))
    });
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, item) in items.iter_mut().enumerate() {
        item.severity = i + 1;
        let n = seen.entry(item.id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            item.id = format!("{}~{}", item.id, n);
        }
    }
    DiffReport {
        functionally_equivalent: items.is_empty(),
        items,
        suppressed: Vec::new(),
    }
}

impl Comparison {
    pub fn report(&self) -> DiffReport {
        let pairs = match_sprites(&self.student, &self.teacher);
        let mut items = module_items(&self.student, &self.teacher, &pairs);
        for pair in &pairs {
            self.sprite_items(*pair, &mut items);
        }
        let (kept, suppressed) = filter_semantic_equivalences(items);
        let kept = kept.into_iter().map(|i| self.present(i)).collect();
        let mut report = rank_severity(kept);
        report.suppressed = suppressed
            .into_iter()
            .map(|s| Suppressed {
                item: self.present(s.item),
                reason: s.reason,
            })
            .collect();
        report
            .suppressed
            .sort_by(|a, b| (&a.item.location, &a.item.id).cmp(&(&b.item.location, &b.item.id)));
        report
    }

    fn source(&self, side: &NormalizedAst, target: usize, script: usize) -> ScriptRef {
        let origin = &side.origins[target][script];
        ScriptRef {
            target: origin.target.clone(),
            index: origin.index,
        }
    }

    fn sprite_items(&self, pair: SpritePair, out: &mut Vec<DiffItem>) {
        let st = &self.student.project.targets[pair.student];
        let tt = &self.teacher.project.targets[pair.teacher];
        let m = match_scripts_by_event(st, tt);
        for &j in &m.missing {
            let mut location = script_path(tt, j);
            location.sprite_name = Some(st.name.clone());
            location.script_ordinal = None;
            let mut item = DiffItem::new(Level::Script, Kind::Missing, location, script_path(tt, j));
            item.teacher_fragment = Some(Fragment::Script {
                script: tt.scripts[j].clone(),
            });
            item.teacher_source = Some(self.source(&self.teacher, pair.teacher, j));
            out.push(item);
        }
        for &i in &m.extra {
            let mut item = DiffItem::new(Level::Script, Kind::Extra, script_path(st, i), DiffPath {
                sprite_name: Some(tt.name.clone()),
                ..Default::default()
            });
            item.student_fragment = Some(Fragment::Script {
                script: st.scripts[i].clone(),
            });
            item.student_source = Some(self.source(&self.student, pair.student, i));
            out.push(item);
        }
        for &(i, j) in &m.matched {
            let ctx = ScriptPairCtx {
                student: script_path(st, i),
                teacher: script_path(tt, j),
                student_source: self.source(&self.student, pair.student, i),
                teacher_source: self.source(&self.teacher, pair.teacher, j),
            };
            let s = script_blocks(&st.scripts[i]);
            let t = script_blocks(&tt.scripts[j]);
            let (_, pairs) = align::align(&s, &t);
            ctx.block_items(&pairs, &s, &t, &[], &[], out);
        }
    }

    /// Name of an entity as the learner should see it: the student's name
    /// when the student has the entity, else the teacher's.
    fn display_name(&self, kind: EntityKind, canonical: &str) -> Option<String> {
        self.student
            .rename_map
            .original(kind, canonical)
            .or_else(|| self.teacher.rename_map.original(kind, canonical))
            .map(|e| e.original.clone())
    }

    fn display_key(&self, key: &EventKey) -> EventKey {
        let kind = match key.hat_opcode.as_str() {
            "event_whenbroadcastreceived" => EntityKind::Broadcast,
            "procedures_definition" => EntityKind::Procedure,
            _ => return key.clone(),
        };
        EventKey {
            hat_opcode: key.hat_opcode.clone(),
            discriminator: key
                .discriminator
                .as_ref()
                .map(|d| self.display_name(kind, d).unwrap_or_else(|| d.clone())),
        }
    }

    /// Hat of the normalized script a path points at, with display names.
    fn hat_at(&self, side: &NormalizedAst, path: &DiffPath) -> Option<BlockNode> {
        let target = side.project.target(path.sprite_name.as_deref()?)?;
        let key = path.event_key.as_ref()?;
        let ordinal = path.script_ordinal.unwrap_or(0);
        let script = target.scripts.iter().filter(|s| &s.trigger == key).nth(ordinal)?;
        let mut hat = script.hat.clone()?;
        normalize::relabel_block(&mut hat, &|k, n| self.display_name(k, n));
        Some(hat)
    }

    /// Translate names back for display, then fill in slot texts, message
    /// and id.
    fn present(&self, mut item: DiffItem) -> DiffItem {
        let names = |k: EntityKind, n: &str| self.display_name(k, n);
        let hat = match item.kind {
            Kind::Missing => self.hat_at(&self.teacher, &item.teacher_location),
            _ => self.hat_at(&self.student, &item.location),
        };
        for f in [&mut item.student_fragment, &mut item.teacher_fragment].into_iter().flatten() {
            f.relabel(&names);
        }
        for path in [&mut item.location, &mut item.teacher_location] {
            if let Some(key) = path.event_key.as_mut() {
                *key = self.display_key(key);
            }
        }
        if let (Some(Fragment::Blocks { blocks: sb }), Some(Fragment::Blocks { blocks: tb })) =
            (&item.student_fragment, &item.teacher_fragment)
        {
            if let (Some(a), Some(b)) = (sb.first(), tb.first()) {
                for change in &mut item.changed_slots {
                    change.student = slot_display(a, &change.slot);
                    change.teacher = slot_display(b, &change.slot);
                }
            }
        }
        if item.location.event_key.is_some() {
            item.script_title = Some(render::event_title(hat.as_ref()));
        }
        item.message = message(&item, hat.as_ref());
        item.id = format!("{}/{}@{}", item.level, item.kind, item.location);
        item
    }
}

fn slot_display(block: &BlockNode, slot: &str) -> String {
    let kind = catalog::lookup(&block.opcode)
        .and_then(|e| e.slot(slot))
        .map_or(SlotKind::Text, |s| s.kind);
    if let Some(f) = block.field(slot) {
        return format!("[{} v]", f.value);
    }
    match block.input(slot) {
        Some(s) => render::value_text(&s.value, kind),
        None => String::new(),
    }
}

fn owner_phrase(sprite: Option<&str>, stage: bool) -> String {
    match (stage, sprite) {
        (true, _) => "the stage's".to_string(),
        (false, Some(name)) => format!("{name}'s"),
        (false, None) => "the".to_string(),
    }
}

fn first_line(fragment: Option<&Fragment>) -> String {
    fragment.and_then(|f| f.text().into_iter().next()).unwrap_or_default()
}

fn message(item: &DiffItem, hat: Option<&BlockNode>) -> String {
    let sprite = item.location.sprite_name.as_deref().unwrap_or("");
    let is_stage = item.location.sprite_name.as_deref() == Some("Stage")
        && item.location.event_key.is_some()
        && matches!(item.level, Level::Script | Level::Block | Level::Parameter);
    let title = render::event_title(hat);
    let who = if is_stage {
        "The stage".to_string()
    } else {
        format!("The character {sprite}")
    };
    let in_script = format!("In {} {title} script", owner_phrase(Some(sprite), is_stage));
    match (item.level, item.kind) {
        (Level::Module, Kind::Missing) => format!("The project is missing the character {sprite}"),
        (Level::Module, _) => format!("The character {sprite} is not part of the reference project"),
        (Level::Script, Kind::Missing) => format!("{who} is missing the script {title}"),
        (Level::Script, _) => format!("{who} has an extra script {title}"),
        (Level::Block, kind) => {
            let fragment = if kind == Kind::Missing {
                item.teacher_fragment.as_ref()
            } else {
                item.student_fragment.as_ref()
            };
            let n = match fragment {
                Some(Fragment::Blocks { blocks }) => blocks.len(),
                _ => 1,
            };
            let what = if kind == Kind::Missing { "is missing" } else { "is not needed" };
            let more = match n {
                0 | 1 => String::new(),
                2 => " together with the block after it".to_string(),
                n => format!(" together with the {} blocks after it", n - 1),
            };
            format!("{in_script}, \"{}\"{more} {what}", first_line(fragment))
        }
        (Level::Parameter, _) => format!(
            "{in_script}, \"{}\" should be \"{}\"",
            first_line(item.student_fragment.as_ref()),
            first_line(item.teacher_fragment.as_ref())
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3::{InputSlot, InputValue, Literal, LiteralKind};

    fn num(v: &str) -> InputValue {
        InputValue::Literal(Literal {
            kind: LiteralKind::Number,
            value: v.into(),
        })
    }

    fn move_steps(n: &str) -> BlockNode {
        let mut b = BlockNode::new("motion_movesteps");
        b.inputs.push(InputSlot {
            name: "STEPS".into(),
            value: num(n),
            obscured: None,
        });
        b
    }

    fn project(sprites: Vec<Target>) -> ProjectAst {
        let mut p = ProjectAst::empty();
        p.targets.extend(sprites);
        p
    }

    fn cat(body: Vec<BlockNode>) -> Target {
        let mut t = Target::new("Cat", false);
        t.scripts.push(Script::new(Some(BlockNode::new("event_whenflagclicked")), body));
        t
    }

    #[test]
    fn report_json_round_trips() {
        for f in crate::corpus::seeded_pairs() {
            let r = diff_projects(&f.student, &f.teacher).unwrap();
            let back: DiffReport = serde_json::from_str(&r.to_json()).unwrap();
            assert_eq!(back, r, "{}", f.name);
        }
    }

    #[test]
    fn identical_projects_are_equivalent() {
        let p = project(vec![cat(vec![move_steps("10")])]);
        let r = diff_projects(&p, &p).unwrap();
        assert!(r.functionally_equivalent);
        assert!(r.items.is_empty());
    }

    #[test]
    fn missing_sprite_is_module_item() {
        let s = project(vec![]);
        let t = project(vec![cat(vec![])]);
        let r = diff_projects(&s, &t).unwrap();
        assert_eq!(r.items.len(), 1);
        assert_eq!((r.items[0].level, r.items[0].kind), (Level::Module, Kind::Missing));
        assert_eq!(r.items[0].location.sprite_name.as_deref(), Some("Cat"));
    }

    #[test]
    fn extra_sprite_is_module_item() {
        let mut dog = cat(vec![]);
        dog.name = "Dog".into();
        dog.scripts[0] = Script::new(Some(BlockNode::new("event_whenthisspriteclicked")), vec![]);
        let s = project(vec![cat(vec![]), dog]);
        let t = project(vec![cat(vec![])]);
        let r = diff_projects(&s, &t).unwrap();
        assert_eq!(r.items.len(), 1);
        assert_eq!((r.items[0].level, r.items[0].kind), (Level::Module, Kind::Extra));
    }

    #[test]
    fn renamed_sprite_matches_by_scripts() {
        let mut kitty = cat(vec![move_steps("10")]);
        kitty.name = "Kitty".into();
        let s = project(vec![kitty]);
        let t = project(vec![cat(vec![move_steps("10")])]);
        let r = diff_projects(&s, &t).unwrap();
        assert!(r.items.is_empty(), "{:?}", r.items);
    }

    #[test]
    fn missing_script_message() {
        let mut s_cat = cat(vec![]);
        s_cat.scripts.clear();
        s_cat.scripts.push(Script::new(Some(BlockNode::new("event_whenthisspriteclicked")), vec![]));
        let mut t_cat = cat(vec![move_steps("10")]);
        t_cat.scripts.push(Script::new(Some(BlockNode::new("event_whenthisspriteclicked")), vec![]));
        let r = diff_projects(&project(vec![s_cat]), &project(vec![t_cat])).unwrap();
        assert_eq!(r.items[0].level, Level::Script);
        assert_eq!(r.items[0].message, "The character Cat is missing the script When Green Flag Clicked");
    }

    #[test]
    fn parameter_change_message() {
        let s = project(vec![cat(vec![move_steps("3")])]);
        let t = project(vec![cat(vec![move_steps("10")])]);
        let r = diff_projects(&s, &t).unwrap();
        assert_eq!(r.items.len(), 1);
        let item = &r.items[0];
        assert_eq!(item.level, Level::Parameter);
        assert_eq!(
            item.changed_slots,
            vec![SlotChange {
                slot: "STEPS".into(),
                student: "(3)".into(),
                teacher: "(10)".into()
            }]
        );
        assert!(item.message.ends_with("\"move (3) steps\" should be \"move (10) steps\""));
        assert_eq!(item.location.block_path, Some(vec![BlockStep::at(1)]));
    }

    #[test]
    fn severities_are_contiguous_and_tiered() {
        let mut t_cat = cat(vec![move_steps("10")]);
        t_cat.scripts.push(Script::new(Some(BlockNode::new("event_whenthisspriteclicked")), vec![]));
        let mut dog = cat(vec![]);
        dog.name = "Dog".into();
        let s = project(vec![cat(vec![move_steps("3")])]);
        let t = project(vec![t_cat, dog]);
        let r = diff_projects(&s, &t).unwrap();
        let sev: Vec<usize> = r.items.iter().map(|i| i.severity).collect();
        assert_eq!(sev, vec![1, 2, 3]);
        assert_eq!(r.items[0].level, Level::Module);
        assert_eq!(r.items[1].level, Level::Script);
        assert_eq!(r.items[2].level, Level::Parameter);
    }

    #[test]
    fn empty_items_rank_to_equivalent_report() {
        let r = rank_severity(Vec::new());
        assert!(r.functionally_equivalent);
    }

    #[test]
    fn de_morgan_fragments_are_suppressed() {
        let touching = |what: &str| {
            let mut menu = BlockNode::new("sensing_touchingobjectmenu");
            menu.shadow = true;
            menu.fields.push(crate::sb3::FieldSlot {
                name: "TOUCHINGOBJECTMENU".into(),
                value: what.into(),
                id: None,
            });
            let mut b = BlockNode::new("sensing_touchingobject");
            b.inputs.push(InputSlot {
                name: "TOUCHINGOBJECTMENU".into(),
                value: InputValue::Expression(Box::new(menu)),
                obscured: None,
            });
            InputValue::Expression(Box::new(b))
        };
        let op = |code: &str, slots: Vec<(&str, InputValue)>| {
            let mut b = BlockNode::new(code);
            for (n, v) in slots {
                b.inputs.push(InputSlot {
                    name: n.into(),
                    value: v,
                    obscured: None,
                });
            }
            InputValue::Expression(Box::new(b))
        };
        let not = |v| op("operator_not", vec![("OPERAND", v)]);
        let lhs = not(op("operator_and", vec![("OPERAND1", touching("a")), ("OPERAND2", touching("b"))]));
        let rhs = op("operator_or", vec![("OPERAND1", not(touching("a"))), ("OPERAND2", not(touching("b")))]);
        let wait = |cond| {
            let mut b = BlockNode::new("control_wait_until");
            b.inputs.push(InputSlot {
                name: "CONDITION".into(),
                value: cond,
                obscured: None,
            });
            b
        };
        let mut item = DiffItem::new(Level::Parameter, Kind::Modified, DiffPath::default(), DiffPath::default());
        item.student_fragment = Some(Fragment::Blocks { blocks: vec![wait(lhs)] });
        item.teacher_fragment = Some(Fragment::Blocks { blocks: vec![wait(rhs)] });
        let (kept, suppressed) = filter_semantic_equivalences(vec![item]);
        assert!(kept.is_empty());
        assert_eq!(suppressed[0].reason, SuppressReason::Equivalent);
    }

    #[test]
    fn unknown_opcodes_are_uncertain() {
        let mut item = DiffItem::new(Level::Block, Kind::Extra, DiffPath::default(), DiffPath::default());
        item.student_fragment = Some(Fragment::Blocks {
            blocks: vec![BlockNode::new("pen_clear")],
        });
        let (kept, suppressed) = filter_semantic_equivalences(vec![item]);
        assert!(kept.is_empty());
        assert_eq!(suppressed[0].reason, SuppressReason::Uncertain);
    }

    #[test]
    fn extra_play_sound_is_kept() {
        let mut item = DiffItem::new(Level::Block, Kind::Extra, DiffPath::default(), DiffPath::default());
        item.student_fragment = Some(Fragment::Blocks {
            blocks: vec![BlockNode::new("sound_play")],
        });
        let (kept, _) = filter_semantic_equivalences(vec![item]);
        assert_eq!(kept.len(), 1);
    }
}
