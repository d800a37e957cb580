//! Opcode catalog for the core Scratch 3.0 palettes.
//!
//! Each entry maps an opcode to its label template, palette category, block
//! shape and slot list. Templates name their parameters as `{SLOT}`.
//! Extension opcodes are absent on purpose and resolve to `None`.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Shape {
    Hat,
    Stack,
    CBlock,
    Reporter,
    Boolean,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Category {
    Motion,
    Looks,
    Sound,
    Events,
    Control,
    Sensing,
    Operators,
    Variables,
    Lists,
    MyBlocks,
    Unknown,
}

impl Category {
    /// Primary block color of the standard palette.
    pub fn color_hex(self) -> &'static str {
        match self {
            Category::Motion => "#4C97FF",
            Category::Looks => "#9966FF",
            Category::Sound => "#CF63CF",
            Category::Events => "#FFBF00",
            Category::Control => "#FFAB19",
            Category::Sensing => "#5CB1D6",
            Category::Operators => "#59C059",
            Category::Variables => "#FF8C1A",
            Category::Lists => "#FF661A",
            Category::MyBlocks => "#FF6680",
            Category::Unknown => "#BFBFBF",
        }
    }
}

/// How a slot is filled and drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SlotKind {
    /// Round numeric input.
    Number,
    /// Rectangular text input.
    Text,
    /// Hexagonal boolean input.
    Boolean,
    Color,
    /// Input holding a dropdown menu shadow block.
    Menu,
    /// Input holding a broadcast message.
    Broadcast,
    /// Dropdown stored as a field on the block itself.
    Field,
    /// Input holding a custom block prototype.
    Prototype,
}

impl SlotKind {
    pub fn is_field(self) -> bool {
        matches!(self, SlotKind::Field)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SlotSpec {
    pub name: &'static str,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub opcode: &'static str,
    pub template: &'static str,
    pub category: Category,
    pub shape: Shape,
    pub slots: &'static [SlotSpec],
    /// Number of enclosed substacks.
    pub substacks: u8,
    /// Label between the first and second substack.
    pub else_label: Option<&'static str>,
    /// Dropdown shadow rendered inside another block's slot.
    pub menu: bool,
    /// Slots are determined by the block's mutation (custom blocks).
    pub variadic: bool,
}

impl CatalogEntry {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn is_hat(&self) -> bool {
        self.shape == Shape::Hat
    }
}

/// Marker returned by [`hat_discriminator`] for custom block definitions,
/// whose discriminator is the prototype's proccode.
pub const PROCCODE: &str = "@proccode";

/// Field that parameterizes a hat opcode, if any.
pub fn hat_discriminator(opcode: &str) -> Option<&'static str> {
    match opcode {
        "event_whenbroadcastreceived" => Some("BROADCAST_OPTION"),
        "event_whenkeypressed" => Some("KEY_OPTION"),
        "event_whenbackdropswitchesto" => Some("BACKDROP"),
        "event_whengreaterthan" => Some("WHENGREATERTHANMENU"),
        "procedures_definition" => Some(PROCCODE),
        _ => None,
    }
}

/// Look up an opcode. Unknown opcodes (extensions, custom additions) yield
/// `None` and take the text fallback path when rendered.
pub fn lookup(opcode: &str) -> Option<&'static CatalogEntry> {
    static INDEX: OnceLock<HashMap<&'static str, &'static CatalogEntry>> = OnceLock::new();
    INDEX
        .get_or_init(|| ENTRIES.iter().map(|e| (e.opcode, e)).collect())
        .get(opcode)
        .copied()
}

pub fn is_known(opcode: &str) -> bool {
    lookup(opcode).is_some()
}

pub fn entries() -> &'static [CatalogEntry] {
    ENTRIES
}

/// Opcodes whose two operands may be swapped without changing meaning.
pub fn commutative_operands(opcode: &str) -> Option<(&'static str, &'static str)> {
    match opcode {
        "operator_add" | "operator_multiply" => Some(("NUM1", "NUM2")),
        "operator_and" | "operator_or" | "operator_equals" => Some(("OPERAND1", "OPERAND2")),
        _ => None,
    }
}

macro_rules! slots {
    ($($name:literal : $kind:ident),* $(,)?) => {
        &[$(SlotSpec { name: $name, kind: SlotKind::$kind }),*]
    };
}

macro_rules! entry {
    ($op:literal, $tpl:literal, $cat:ident, $shape:ident, [$($slots:tt)*]) => {
        entry!($op, $tpl, $cat, $shape, [$($slots)*], 0, None)
    };
    ($op:literal, $tpl:literal, $cat:ident, $shape:ident, [$($slots:tt)*], $sub:literal, $else:expr) => {
        CatalogEntry {
            opcode: $op,
            template: $tpl,
            category: Category::$cat,
            shape: Shape::$shape,
            slots: slots!($($slots)*),
            substacks: $sub,
            else_label: $else,
            menu: false,
            variadic: false,
        }
    };
}

macro_rules! menu {
    ($op:literal, $field:literal, $cat:ident) => {
        CatalogEntry {
            opcode: $op,
            template: concat!("{", $field, "}"),
            category: Category::$cat,
            shape: Shape::Reporter,
            slots: slots!($field: Field),
            substacks: 0,
            else_label: None,
            menu: true,
            variadic: false,
        }
    };
}

macro_rules! custom {
    ($op:literal, $shape:ident, [$($slots:tt)*]) => {
        CatalogEntry {
            opcode: $op,
            template: "",
            category: Category::MyBlocks,
            shape: Shape::$shape,
            slots: slots!($($slots)*),
            substacks: 0,
            else_label: None,
            menu: false,
            variadic: true,
        }
    };
}

static ENTRIES: &[CatalogEntry] = &[
    // motion
    entry!("motion_movesteps", "move {STEPS} steps", Motion, Stack, ["STEPS": Number]),
    entry!("motion_turnright", "turn right {DEGREES} degrees", Motion, Stack, ["DEGREES": Number]),
    entry!("motion_turnleft", "turn left {DEGREES} degrees", Motion, Stack, ["DEGREES": Number]),
    entry!("motion_goto", "go to {TO}", Motion, Stack, ["TO": Menu]),
    entry!("motion_gotoxy", "go to x: {X} y: {Y}", Motion, Stack, ["X": Number, "Y": Number]),
    entry!("motion_glideto", "glide {SECS} secs to {TO}", Motion, Stack, ["SECS": Number, "TO": Menu]),
    entry!("motion_glidesecstoxy", "glide {SECS} secs to x: {X} y: {Y}", Motion, Stack, ["SECS": Number, "X": Number, "Y": Number]),
    entry!("motion_pointindirection", "point in direction {DIRECTION}", Motion, Stack, ["DIRECTION": Number]),
    entry!("motion_pointtowards", "point towards {TOWARDS}", Motion, Stack, ["TOWARDS": Menu]),
    entry!("motion_changexby", "change x by {DX}", Motion, Stack, ["DX": Number]),
    entry!("motion_setx", "set x to {X}", Motion, Stack, ["X": Number]),
    entry!("motion_changeyby", "change y by {DY}", Motion, Stack, ["DY": Number]),
    entry!("motion_sety", "set y to {Y}", Motion, Stack, ["Y": Number]),
    entry!("motion_ifonedgebounce", "if on edge, bounce", Motion, Stack, []),
    entry!("motion_setrotationstyle", "set rotation style {STYLE}", Motion, Stack, ["STYLE": Field]),
    entry!("motion_xposition", "x position", Motion, Reporter, []),
    entry!("motion_yposition", "y position", Motion, Reporter, []),
    entry!("motion_direction", "direction", Motion, Reporter, []),
    menu!("motion_goto_menu", "TO", Motion),
    menu!("motion_glideto_menu", "TO", Motion),
    menu!("motion_pointtowards_menu", "TOWARDS", Motion),
    // looks
    entry!("looks_sayforsecs", "say {MESSAGE} for {SECS} seconds", Looks, Stack, ["MESSAGE": Text, "SECS": Number]),
    entry!("looks_say", "say {MESSAGE}", Looks, Stack, ["MESSAGE": Text]),
    entry!("looks_thinkforsecs", "think {MESSAGE} for {SECS} seconds", Looks, Stack, ["MESSAGE": Text, "SECS": Number]),
    entry!("looks_think", "think {MESSAGE}", Looks, Stack, ["MESSAGE": Text]),
    entry!("looks_switchcostumeto", "switch costume to {COSTUME}", Looks, Stack, ["COSTUME": Menu]),
    entry!("looks_nextcostume", "next costume", Looks, Stack, []),
    entry!("looks_switchbackdropto", "switch backdrop to {BACKDROP}", Looks, Stack, ["BACKDROP": Menu]),
    entry!("looks_switchbackdroptoandwait", "switch backdrop to {BACKDROP} and wait", Looks, Stack, ["BACKDROP": Menu]),
    entry!("looks_nextbackdrop", "next backdrop", Looks, Stack, []),
    entry!("looks_changesizeby", "change size by {CHANGE}", Looks, Stack, ["CHANGE": Number]),
    entry!("looks_setsizeto", "set size to {SIZE} %", Looks, Stack, ["SIZE": Number]),
    entry!("looks_changeeffectby", "change {EFFECT} effect by {CHANGE}", Looks, Stack, ["EFFECT": Field, "CHANGE": Number]),
    entry!("looks_seteffectto", "set {EFFECT} effect to {VALUE}", Looks, Stack, ["EFFECT": Field, "VALUE": Number]),
    entry!("looks_cleargraphiceffects", "clear graphic effects", Looks, Stack, []),
    entry!("looks_show", "show", Looks, Stack, []),
    entry!("looks_hide", "hide", Looks, Stack, []),
    entry!("looks_gotofrontback", "go to {FRONT_BACK} layer", Looks, Stack, ["FRONT_BACK": Field]),
    entry!("looks_goforwardbackwardlayers", "go {FORWARD_BACKWARD} {NUM} layers", Looks, Stack, ["FORWARD_BACKWARD": Field, "NUM": Number]),
    entry!("looks_costumenumbername", "costume {NUMBER_NAME}", Looks, Reporter, ["NUMBER_NAME": Field]),
    entry!("looks_backdropnumbername", "backdrop {NUMBER_NAME}", Looks, Reporter, ["NUMBER_NAME": Field]),
    entry!("looks_size", "size", Looks, Reporter, []),
    menu!("looks_costume", "COSTUME", Looks),
    menu!("looks_backdrops", "BACKDROP", Looks),
    // sound
    entry!("sound_playuntildone", "play sound {SOUND_MENU} until done", Sound, Stack, ["SOUND_MENU": Menu]),
    entry!("sound_play", "start sound {SOUND_MENU}", Sound, Stack, ["SOUND_MENU": Menu]),
    entry!("sound_stopallsounds", "stop all sounds", Sound, Stack, []),
    entry!("sound_changeeffectby", "change {EFFECT} effect by {VALUE}", Sound, Stack, ["EFFECT": Field, "VALUE": Number]),
    entry!("sound_seteffectto", "set {EFFECT} effect to {VALUE}", Sound, Stack, ["EFFECT": Field, "VALUE": Number]),
    entry!("sound_cleareffects", "clear sound effects", Sound, Stack, []),
    entry!("sound_changevolumeby", "change volume by {VOLUME}", Sound, Stack, ["VOLUME": Number]),
    entry!("sound_setvolumeto", "set volume to {VOLUME} %", Sound, Stack, ["VOLUME": Number]),
    entry!("sound_volume", "volume", Sound, Reporter, []),
    menu!("sound_sounds_menu", "SOUND_MENU", Sound),
    // events
    entry!("event_whenflagclicked", "when green flag clicked", Events, Hat, []),
    entry!("event_whenkeypressed", "when {KEY_OPTION} key pressed", Events, Hat, ["KEY_OPTION": Field]),
    entry!("event_whenthisspriteclicked", "when this sprite clicked", Events, Hat, []),
    entry!("event_whenstageclicked", "when stage clicked", Events, Hat, []),
    entry!("event_whenbackdropswitchesto", "when backdrop switches to {BACKDROP}", Events, Hat, ["BACKDROP": Field]),
    entry!("event_whengreaterthan", "when {WHENGREATERTHANMENU} > {VALUE}", Events, Hat, ["WHENGREATERTHANMENU": Field, "VALUE": Number]),
    entry!("event_whenbroadcastreceived", "when I receive {BROADCAST_OPTION}", Events, Hat, ["BROADCAST_OPTION": Field]),
    entry!("event_whentouchingobject", "when this sprite touches {TOUCHINGOBJECTMENU}", Events, Hat, ["TOUCHINGOBJECTMENU": Menu]),
    entry!("event_broadcast", "broadcast {BROADCAST_INPUT}", Events, Stack, ["BROADCAST_INPUT": Broadcast]),
    entry!("event_broadcastandwait", "broadcast {BROADCAST_INPUT} and wait", Events, Stack, ["BROADCAST_INPUT": Broadcast]),
    menu!("event_touchingobjectmenu", "TOUCHINGOBJECTMENU", Events),
    // control
    entry!("control_wait", "wait {DURATION} seconds", Control, Stack, ["DURATION": Number]),
    entry!("control_repeat", "repeat {TIMES}", Control, CBlock, ["TIMES": Number], 1, None),
    entry!("control_forever", "forever", Control, CBlock, [], 1, None),
    entry!("control_if", "if {CONDITION} then", Control, CBlock, ["CONDITION": Boolean], 1, None),
    entry!("control_if_else", "if {CONDITION} then", Control, CBlock, ["CONDITION": Boolean], 2, Some("else")),
    entry!("control_wait_until", "wait until {CONDITION}", Control, Stack, ["CONDITION": Boolean]),
    entry!("control_repeat_until", "repeat until {CONDITION}", Control, CBlock, ["CONDITION": Boolean], 1, None),
    entry!("control_while", "while {CONDITION}", Control, CBlock, ["CONDITION": Boolean], 1, None),
    entry!("control_for_each", "for each {VARIABLE} in {VALUE}", Control, CBlock, ["VARIABLE": Field, "VALUE": Number], 1, None),
    entry!("control_stop", "stop {STOP_OPTION}", Control, Cap, ["STOP_OPTION": Field]),
    entry!("control_start_as_clone", "when I start as a clone", Control, Hat, []),
    entry!("control_create_clone_of", "create clone of {CLONE_OPTION}", Control, Stack, ["CLONE_OPTION": Menu]),
    entry!("control_delete_this_clone", "delete this clone", Control, Cap, []),
    menu!("control_create_clone_of_menu", "CLONE_OPTION", Control),
    // sensing
    entry!("sensing_touchingobject", "touching {TOUCHINGOBJECTMENU}?", Sensing, Boolean, ["TOUCHINGOBJECTMENU": Menu]),
    entry!("sensing_touchingcolor", "touching color {COLOR}?", Sensing, Boolean, ["COLOR": Color]),
    entry!("sensing_coloristouchingcolor", "color {COLOR} is touching {COLOR2}?", Sensing, Boolean, ["COLOR": Color, "COLOR2": Color]),
    entry!("sensing_distanceto", "distance to {DISTANCETOMENU}", Sensing, Reporter, ["DISTANCETOMENU": Menu]),
    entry!("sensing_askandwait", "ask {QUESTION} and wait", Sensing, Stack, ["QUESTION": Text]),
    entry!("sensing_answer", "answer", Sensing, Reporter, []),
    entry!("sensing_keypressed", "key {KEY_OPTION} pressed?", Sensing, Boolean, ["KEY_OPTION": Menu]),
    entry!("sensing_mousedown", "mouse down?", Sensing, Boolean, []),
    entry!("sensing_mousex", "mouse x", Sensing, Reporter, []),
    entry!("sensing_mousey", "mouse y", Sensing, Reporter, []),
    entry!("sensing_setdragmode", "set drag mode {DRAG_MODE}", Sensing, Stack, ["DRAG_MODE": Field]),
    entry!("sensing_loudness", "loudness", Sensing, Reporter, []),
    entry!("sensing_timer", "timer", Sensing, Reporter, []),
    entry!("sensing_resettimer", "reset timer", Sensing, Stack, []),
    entry!("sensing_of", "{PROPERTY} of {OBJECT}", Sensing, Reporter, ["PROPERTY": Field, "OBJECT": Menu]),
    entry!("sensing_current", "current {CURRENTMENU}", Sensing, Reporter, ["CURRENTMENU": Field]),
    entry!("sensing_dayssince2000", "days since 2000", Sensing, Reporter, []),
    entry!("sensing_username", "username", Sensing, Reporter, []),
    menu!("sensing_touchingobjectmenu", "TOUCHINGOBJECTMENU", Sensing),
    menu!("sensing_distancetomenu", "DISTANCETOMENU", Sensing),
    menu!("sensing_keyoptions", "KEY_OPTION", Sensing),
    menu!("sensing_of_object_menu", "OBJECT", Sensing),
    // operators
    entry!("operator_add", "{NUM1} + {NUM2}", Operators, Reporter, ["NUM1": Number, "NUM2": Number]),
    entry!("operator_subtract", "{NUM1} - {NUM2}", Operators, Reporter, ["NUM1": Number, "NUM2": Number]),
    entry!("operator_multiply", "{NUM1} * {NUM2}", Operators, Reporter, ["NUM1": Number, "NUM2": Number]),
    entry!("operator_divide", "{NUM1} / {NUM2}", Operators, Reporter, ["NUM1": Number, "NUM2": Number]),
    entry!("operator_random", "pick random {FROM} to {TO}", Operators, Reporter, ["FROM": Number, "TO": Number]),
    entry!("operator_gt", "{OPERAND1} > {OPERAND2}", Operators, Boolean, ["OPERAND1": Text, "OPERAND2": Text]),
    entry!("operator_lt", "{OPERAND1} < {OPERAND2}", Operators, Boolean, ["OPERAND1": Text, "OPERAND2": Text]),
    entry!("operator_equals", "{OPERAND1} = {OPERAND2}", Operators, Boolean, ["OPERAND1": Text, "OPERAND2": Text]),
    entry!("operator_and", "{OPERAND1} and {OPERAND2}", Operators, Boolean, ["OPERAND1": Boolean, "OPERAND2": Boolean]),
    entry!("operator_or", "{OPERAND1} or {OPERAND2}", Operators, Boolean, ["OPERAND1": Boolean, "OPERAND2": Boolean]),
    entry!("operator_not", "not {OPERAND}", Operators, Boolean, ["OPERAND": Boolean]),
    entry!("operator_join", "join {STRING1} {STRING2}", Operators, Reporter, ["STRING1": Text, "STRING2": Text]),
    entry!("operator_letter_of", "letter {LETTER} of {STRING}", Operators, Reporter, ["LETTER": Number, "STRING": Text]),
    entry!("operator_length", "length of {STRING}", Operators, Reporter, ["STRING": Text]),
    entry!("operator_contains", "{STRING1} contains {STRING2}?", Operators, Boolean, ["STRING1": Text, "STRING2": Text]),
    entry!("operator_mod", "{NUM1} mod {NUM2}", Operators, Reporter, ["NUM1": Number, "NUM2": Number]),
    entry!("operator_round", "round {NUM}", Operators, Reporter, ["NUM": Number]),
    entry!("operator_mathop", "{OPERATOR} of {NUM}", Operators, Reporter, ["OPERATOR": Field, "NUM": Number]),
    // variables
    entry!("data_variable", "{VARIABLE}", Variables, Reporter, ["VARIABLE": Field]),
    entry!("data_setvariableto", "set {VARIABLE} to {VALUE}", Variables, Stack, ["VARIABLE": Field, "VALUE": Text]),
    entry!("data_changevariableby", "change {VARIABLE} by {VALUE}", Variables, Stack, ["VARIABLE": Field, "VALUE": Number]),
    entry!("data_showvariable", "show variable {VARIABLE}", Variables, Stack, ["VARIABLE": Field]),
    entry!("data_hidevariable", "hide variable {VARIABLE}", Variables, Stack, ["VARIABLE": Field]),
    // lists
    entry!("data_listcontents", "{LIST}", Lists, Reporter, ["LIST": Field]),
    entry!("data_addtolist", "add {ITEM} to {LIST}", Lists, Stack, ["ITEM": Text, "LIST": Field]),
    entry!("data_deleteoflist", "delete {INDEX} of {LIST}", Lists, Stack, ["INDEX": Number, "LIST": Field]),
    entry!("data_deletealloflist", "delete all of {LIST}", Lists, Stack, ["LIST": Field]),
    entry!("data_insertatlist", "insert {ITEM} at {INDEX} of {LIST}", Lists, Stack, ["ITEM": Text, "INDEX": Number, "LIST": Field]),
    entry!("data_replaceitemoflist", "replace item {INDEX} of {LIST} with {ITEM}", Lists, Stack, ["INDEX": Number, "LIST": Field, "ITEM": Text]),
    entry!("data_itemoflist", "item {INDEX} of {LIST}", Lists, Reporter, ["INDEX": Number, "LIST": Field]),
    entry!("data_itemnumoflist", "item # of {ITEM} in {LIST}", Lists, Reporter, ["ITEM": Text, "LIST": Field]),
    entry!("data_lengthoflist", "length of {LIST}", Lists, Reporter, ["LIST": Field]),
    entry!("data_listcontainsitem", "{LIST} contains {ITEM}?", Lists, Boolean, ["LIST": Field, "ITEM": Text]),
    entry!("data_showlist", "show list {LIST}", Lists, Stack, ["LIST": Field]),
    entry!("data_hidelist", "hide list {LIST}", Lists, Stack, ["LIST": Field]),
    // my blocks
    entry!("procedures_definition", "define {custom_block}", MyBlocks, Hat, ["custom_block": Prototype]),
    custom!("procedures_prototype", Stack, []),
    custom!("procedures_call", Stack, []),
    entry!("argument_reporter_string_number", "{VALUE}", MyBlocks, Reporter, ["VALUE": Field]),
    entry!("argument_reporter_boolean", "{VALUE}", MyBlocks, Boolean, ["VALUE": Field]),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn move_steps_entry() {
        let e = lookup("motion_movesteps").unwrap();
        assert_eq!(e.template, "move {STEPS} steps");
        assert_eq!(e.category, Category::Motion);
        assert_eq!(e.shape, Shape::Stack);
        assert_eq!(e.slots.len(), 1);
        assert_eq!(e.slots[0].name, "STEPS");
    }

    #[test]
    fn green_flag_is_event_hat() {
        let e = lookup("event_whenflagclicked").unwrap();
        assert_eq!(e.shape, Shape::Hat);
        assert_eq!(e.category, Category::Events);
    }

    #[test]
    fn extension_opcode_is_unknown() {
        assert!(lookup("someextension_custom").is_none());
        assert!(lookup("pen_down").is_none());
    }

    #[test]
    fn opcodes_unique_and_templates_reference_declared_slots() {
        let mut seen = std::collections::HashSet::new();
        for e in entries() {
            assert!(seen.insert(e.opcode), "duplicate {}", e.opcode);
            let mut rest = e.template;
            while let Some(start) = rest.find('{') {
                let end = rest[start..].find('}').unwrap() + start;
                let name = &rest[start + 1..end];
                assert!(e.slot(name).is_some(), "{}: {name}", e.opcode);
                rest = &rest[end + 1..];
            }
        }
    }

    #[test]
    fn c_blocks_declare_substacks() {
        for e in entries() {
            assert_eq!(e.shape == Shape::CBlock, e.substacks > 0, "{}", e.opcode);
        }
    }
}
