//! Fixture projects: ten reference/student pairs each carrying one seeded
//! bug, a generator for larger random projects, and behavior-preserving
//! mutators used to build equivalent variants.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diff::{DiffItem, Kind, Level};
use crate::sb3::{
    catalog, load_project, write_sb3, BlockNode, BlockSeq, EntityKind, EntityRef, FieldSlot, InputSlot, InputValue,
    List, Literal, LiteralKind, LoadError, ProjectAst, Script, Target, Variable,
};

pub fn num(v: impl ToString) -> InputValue {
    InputValue::Literal(Literal {
        kind: LiteralKind::Number,
        value: v.to_string(),
    })
}

pub fn txt(v: &str) -> InputValue {
    InputValue::Literal(Literal {
        kind: LiteralKind::Text,
        value: v.into(),
    })
}

pub fn color(v: &str) -> InputValue {
    InputValue::Literal(Literal {
        kind: LiteralKind::Color,
        value: v.into(),
    })
}

pub fn var(name: &str) -> InputValue {
    InputValue::Variable(EntityRef {
        name: name.into(),
        id: None,
    })
}

pub fn ex(block: BlockNode) -> InputValue {
    InputValue::Expression(Box::new(block))
}

/// Chainable construction of block trees.
pub trait BlockBuilder: Sized {
    fn i(self, slot: &str, value: InputValue) -> Self;
    fn f(self, field: &str, value: &str) -> Self;
    fn sub(self, blocks: Vec<BlockNode>) -> Self;
    /// Menu input backed by a shadow block of `menu_opcode`.
    fn m(self, slot: &str, menu_opcode: &str, value: &str) -> Self;
}

impl BlockBuilder for BlockNode {
    fn i(mut self, slot: &str, value: InputValue) -> Self {
        self.inputs.push(InputSlot {
            name: slot.into(),
            value,
            obscured: None,
        });
        self
    }

    fn f(mut self, field: &str, value: &str) -> Self {
        self.fields.push(FieldSlot {
            name: field.into(),
            value: value.into(),
            id: None,
        });
        self
    }

    fn sub(mut self, blocks: Vec<BlockNode>) -> Self {
        self.substacks.push(BlockSeq::new(blocks));
        self
    }

    fn m(self, slot: &str, menu_opcode: &str, value: &str) -> Self {
        let field = catalog::lookup(menu_opcode)
            .and_then(|e| e.slots.first())
            .map_or(slot, |s| s.name);
        let mut menu = b(menu_opcode).f(field, value);
        menu.shadow = true;
        self.i(slot, ex(menu))
    }
}

pub fn b(opcode: &str) -> BlockNode {
    BlockNode::new(opcode)
}

pub fn flag() -> BlockNode {
    b("event_whenflagclicked")
}

pub fn on_key(key: &str) -> BlockNode {
    b("event_whenkeypressed").f("KEY_OPTION", key)
}

pub fn on_click() -> BlockNode {
    b("event_whenthisspriteclicked")
}

pub fn on_receive(message: &str) -> BlockNode {
    b("event_whenbroadcastreceived").f("BROADCAST_OPTION", message)
}

pub fn on_clone() -> BlockNode {
    b("control_start_as_clone")
}

pub fn broadcast(message: &str) -> BlockNode {
    b("event_broadcast").i(
        "BROADCAST_INPUT",
        InputValue::Broadcast(EntityRef {
            name: message.into(),
            id: None,
        }),
    )
}

pub fn forever(body: Vec<BlockNode>) -> BlockNode {
    b("control_forever").sub(body)
}

pub fn repeat(times: impl ToString, body: Vec<BlockNode>) -> BlockNode {
    b("control_repeat").i("TIMES", num(times)).sub(body)
}

pub fn repeat_until(cond: BlockNode, body: Vec<BlockNode>) -> BlockNode {
    b("control_repeat_until").i("CONDITION", ex(cond)).sub(body)
}

pub fn if_then(cond: BlockNode, body: Vec<BlockNode>) -> BlockNode {
    b("control_if").i("CONDITION", ex(cond)).sub(body)
}

pub fn if_else(cond: BlockNode, then: Vec<BlockNode>, otherwise: Vec<BlockNode>) -> BlockNode {
    b("control_if_else").i("CONDITION", ex(cond)).sub(then).sub(otherwise)
}

pub fn wait(secs: impl Into<InputArg>) -> BlockNode {
    b("control_wait").i("DURATION", secs.into().0)
}

pub fn wait_until(cond: BlockNode) -> BlockNode {
    b("control_wait_until").i("CONDITION", ex(cond))
}

pub fn stop_all() -> BlockNode {
    b("control_stop").f("STOP_OPTION", "all")
}

pub fn touching(object: &str) -> BlockNode {
    b("sensing_touchingobject").m("TOUCHINGOBJECTMENU", "sensing_touchingobjectmenu", object)
}

pub fn touching_color(c: &str) -> BlockNode {
    b("sensing_touchingcolor").i("COLOR", color(c))
}

pub fn key_pressed(key: &str) -> BlockNode {
    b("sensing_keypressed").m("KEY_OPTION", "sensing_keyoptions", key)
}

pub fn op(opcode: &str, a: InputValue, c: InputValue) -> BlockNode {
    let (x, y) = match opcode {
        "operator_add" | "operator_subtract" | "operator_multiply" | "operator_divide" | "operator_mod" => {
            ("NUM1", "NUM2")
        }
        "operator_random" => ("FROM", "TO"),
        _ => ("OPERAND1", "OPERAND2"),
    };
    b(opcode).i(x, a).i(y, c)
}

pub fn not(a: BlockNode) -> BlockNode {
    b("operator_not").i("OPERAND", ex(a))
}

pub fn random(from: i64, to: i64) -> BlockNode {
    op("operator_random", num(from), num(to))
}

pub fn go_to_xy(x: impl Into<InputArg>, y: impl Into<InputArg>) -> BlockNode {
    b("motion_gotoxy").i("X", x.into().0).i("Y", y.into().0)
}

pub fn go_to(object: &str) -> BlockNode {
    b("motion_goto").m("TO", "motion_goto_menu", object)
}

pub fn move_steps(n: impl Into<InputArg>) -> BlockNode {
    b("motion_movesteps").i("STEPS", n.into().0)
}

pub fn change_x(n: impl Into<InputArg>) -> BlockNode {
    b("motion_changexby").i("DX", n.into().0)
}

pub fn change_y(n: impl Into<InputArg>) -> BlockNode {
    b("motion_changeyby").i("DY", n.into().0)
}

pub fn set_x(n: impl Into<InputArg>) -> BlockNode {
    b("motion_setx").i("X", n.into().0)
}

pub fn point(dir: i64) -> BlockNode {
    b("motion_pointindirection").i("DIRECTION", num(dir))
}

pub fn turn_right(deg: impl Into<InputArg>) -> BlockNode {
    b("motion_turnright").i("DEGREES", deg.into().0)
}

pub fn say_for(msg: &str, secs: impl ToString) -> BlockNode {
    b("looks_sayforsecs").i("MESSAGE", txt(msg)).i("SECS", num(secs))
}

pub fn show() -> BlockNode {
    b("looks_show")
}

pub fn hide() -> BlockNode {
    b("looks_hide")
}

pub fn set_var(name: &str, value: impl Into<InputArg>) -> BlockNode {
    b("data_setvariableto").f("VARIABLE", name).i("VALUE", value.into().text())
}

pub fn change_var(name: &str, by: impl Into<InputArg>) -> BlockNode {
    b("data_changevariableby").f("VARIABLE", name).i("VALUE", by.into().0)
}

pub fn create_clone(of: &str) -> BlockNode {
    b("control_create_clone_of").m("CLONE_OPTION", "control_create_clone_of_menu", of)
}

/// Input argument: numbers become number literals, blocks expressions.
pub struct InputArg(pub InputValue);

impl InputArg {
    fn text(self) -> InputValue {
        match self.0 {
            InputValue::Literal(l) if l.kind == LiteralKind::Number => txt(&l.value),
            v => v,
        }
    }
}

impl From<i64> for InputArg {
    fn from(v: i64) -> Self {
        InputArg(num(v))
    }
}

impl From<f64> for InputArg {
    fn from(v: f64) -> Self {
        InputArg(num(v))
    }
}

impl From<BlockNode> for InputArg {
    fn from(v: BlockNode) -> Self {
        InputArg(ex(v))
    }
}

impl From<InputValue> for InputArg {
    fn from(v: InputValue) -> Self {
        InputArg(v)
    }
}

pub struct ProjectBuilder {
    project: ProjectAst,
}

pub struct SpriteBuilder {
    target: Target,
}

fn script_at(hat: BlockNode, body: Vec<BlockNode>, n: usize) -> Script {
    let mut s = Script::new(Some(hat), body);
    s.placement.x = Some(20.0 + 400.0 * (n % 2) as f64);
    s.placement.y = Some(20.0 + 300.0 * (n / 2) as f64);
    s
}

fn entity_id(owner: &str, name: &str) -> String {
    let clean: String = format!("{owner}-{name}")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("id_{clean}")
}

impl SpriteBuilder {
    pub fn var(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.target.variables.insert(
            entity_id(&self.target.name, name),
            Variable {
                name: name.into(),
                value: value.into(),
                cloud: false,
            },
        );
        self
    }

    pub fn list(mut self, name: &str) -> Self {
        self.target.lists.insert(
            entity_id(&self.target.name, name),
            List {
                name: name.into(),
                items: Vec::new(),
            },
        );
        self
    }

    pub fn script(mut self, hat: BlockNode, body: Vec<BlockNode>) -> Self {
        let n = self.target.scripts.len();
        self.target.scripts.push(script_at(hat, body, n));
        self
    }
}

impl Default for ProjectBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ProjectBuilder {
    pub fn new() -> Self {
        let mut project = ProjectAst::empty();
        project.extra.insert(
            "meta".into(),
            serde_json::json!({"semver": "3.0.0", "vm": "0.2.0", "agent": "stitch-corpus"}),
        );
        ProjectBuilder { project }
    }

    fn stage(&mut self) -> &mut Target {
        self.project.stage_mut().expect("builder keeps a stage")
    }

    pub fn global_var(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.stage().variables.insert(
            entity_id("stage", name),
            Variable {
                name: name.into(),
                value: value.into(),
                cloud: false,
            },
        );
        self
    }

    pub fn global_list(mut self, name: &str) -> Self {
        self.stage().lists.insert(
            entity_id("stage", name),
            List {
                name: name.into(),
                items: Vec::new(),
            },
        );
        self
    }

    pub fn message(mut self, name: &str) -> Self {
        self.project.broadcasts.insert(entity_id("msg", name), name.into());
        self
    }

    pub fn stage_script(mut self, hat: BlockNode, body: Vec<BlockNode>) -> Self {
        let stage = self.stage();
        let n = stage.scripts.len();
        stage.scripts.push(script_at(hat, body, n));
        self
    }

    pub fn sprite(mut self, name: &str, build: impl FnOnce(SpriteBuilder) -> SpriteBuilder) -> Self {
        let layer = self.project.targets.len();
        let mut target = Target::new(name, false);
        for (k, v) in [
            ("visible", Value::from(true)),
            ("x", Value::from(0)),
            ("y", Value::from(0)),
            ("size", Value::from(100)),
            ("direction", Value::from(90)),
            ("draggable", Value::from(false)),
            ("rotationStyle", Value::from("all around")),
            ("layerOrder", Value::from(layer)),
        ] {
            target.extra.insert(k.into(), v);
        }
        let sprite = build(SpriteBuilder { target });
        self.project.targets.push(sprite.target);
        self
    }

    pub fn build(mut self) -> ProjectAst {
        self.project.assign_fresh_ids();
        self.project
    }
}

/// What the seeded bug looks like in a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeededBug {
    pub category: String,
    pub level: Level,
    pub kind: Kind,
    pub sprite: String,
    /// An opcode the item's fragment must contain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opcode: Option<String>,
}

impl SeededBug {
    pub fn matches(&self, item: &DiffItem) -> bool {
        if item.level != self.level || item.kind != self.kind {
            return false;
        }
        if item.location.sprite_name.as_deref() != Some(self.sprite.as_str()) {
            return false;
        }
        let Some(opcode) = &self.opcode else { return true };
        let fragments = match self.kind {
            Kind::Missing => vec![&item.teacher_fragment],
            Kind::Extra => vec![&item.student_fragment],
            Kind::Modified => vec![&item.student_fragment, &item.teacher_fragment],
        };
        fragments.into_iter().flatten().any(|f| {
            let mut found = false;
            for blk in f.blocks() {
                blk.walk(&mut |x| found |= &x.opcode == opcode);
            }
            found
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub student: ProjectAst,
    pub teacher: ProjectAst,
    pub bug: SeededBug,
}

impl Fixture {
    pub fn slug(&self) -> String {
        self.name.to_lowercase().replace(' ', "-")
    }
}

fn fixture(
    name: &str,
    category: &str,
    (level, kind): (Level, Kind),
    sprite: &str,
    opcode: Option<&str>,
    build: impl Fn(bool) -> ProjectAst,
) -> Fixture {
    Fixture {
        name: name.into(),
        student: build(true),
        teacher: build(false),
        bug: SeededBug {
            category: category.into(),
            level,
            kind,
            sprite: sprite.into(),
            opcode: opcode.map(str::to_string),
        },
    }
}

/// The ten seeded-bug pairs.
pub fn seeded_pairs() -> Vec<Fixture> {
    use Kind::*;
    use Level::*;
    vec![
        fixture(
            "Clone Wars",
            "Cloned sprites accumulate over time",
            (Block, Missing),
            "Enemy",
            Some("control_delete_this_clone"),
            clone_wars,
        ),
        fixture(
            "Bat Maze",
            "Wrong picked color",
            (Parameter, Modified),
            "Bat",
            Some("sensing_touchingcolor"),
            bat_maze,
        ),
        fixture(
            "Ping Pong",
            "Moving scripts missed",
            (Script, Missing),
            "Ball",
            Some("motion_ifonedgebounce"),
            ping_pong,
        ),
        fixture(
            "Maze Game",
            "Wrong respawn location",
            (Parameter, Modified),
            "Player",
            Some("motion_gotoxy"),
            maze_game,
        ),
        fixture(
            "Apple Farm",
            "Missing re-transmission logic",
            (Block, Missing),
            "Apple",
            Some("event_broadcast"),
            apple_farm,
        ),
        fixture(
            "Super Mario",
            "Reversed logic condition",
            (Parameter, Modified),
            "Mario",
            Some("sensing_touchingobject"),
            super_mario,
        ),
        fixture(
            "Snake Game",
            "Wrong death determination logic",
            (Parameter, Modified),
            "Snake",
            Some("operator_or"),
            snake_game,
        ),
        fixture(
            "Scratch Clicker",
            "Value carries over after reset",
            (Block, Missing),
            "Button",
            Some("data_setvariableto"),
            scratch_clicker,
        ),
        fixture(
            "Cat Adventure",
            "Message mismatch",
            (Script, Missing),
            "Dog",
            Some("event_whenbroadcastreceived"),
            cat_adventure,
        ),
        fixture(
            "Platformer",
            "Misordered scripts",
            (Block, Missing),
            "Player",
            None,
            platformer,
        ),
    ]
}

fn clone_wars(buggy: bool) -> ProjectAst {
    let mut fall = vec![
        go_to_xy(random(-200, 200), 180),
        show(),
        repeat_until(
            op("operator_lt", ex(b("motion_yposition")), num(-170)),
            vec![
                change_y(-4),
                if_then(touching("Laser"), vec![change_var("score", 1), b("control_delete_this_clone")]),
            ],
        ),
    ];
    if !buggy {
        fall.push(b("control_delete_this_clone"));
    }
    ProjectBuilder::new()
        .global_var("score", 0)
        .global_var("lives", 3)
        .message("game over")
        .stage_script(
            flag(),
            vec![
                set_var("score", 0),
                set_var("lives", 3),
                forever(vec![create_clone("Enemy"), wait(random(1, 2))]),
            ],
        )
        .stage_script(on_receive("game over"), vec![stop_all()])
        .sprite("Ship", |s| {
            s.script(
                flag(),
                vec![
                    go_to_xy(0, -150),
                    show(),
                    forever(vec![
                        if_then(key_pressed("left arrow"), vec![change_x(-8)]),
                        if_then(key_pressed("right arrow"), vec![change_x(8)]),
                    ]),
                ],
            )
            .script(on_key("space"), vec![create_clone("Laser")])
        })
        .sprite("Laser", |s| {
            s.script(flag(), vec![hide()]).script(
                on_clone(),
                vec![
                    go_to("Ship"),
                    show(),
                    repeat_until(touching("_edge_"), vec![change_y(12)]),
                    b("control_delete_this_clone"),
                ],
            )
        })
        .sprite("Enemy", |s| {
            s.script(flag(), vec![hide()]).script(on_clone(), fall).script(
                on_clone(),
                vec![
                    wait_until(touching("Ship")),
                    change_var("lives", -1),
                    if_then(op("operator_lt", var("lives"), num(1)), vec![broadcast("game over")]),
                    b("control_delete_this_clone"),
                ],
            )
        })
        .build()
}

fn bat_maze(buggy: bool) -> ProjectAst {
    let wall = if buggy { "#0000ff" } else { "#000000" };
    ProjectBuilder::new()
        .message("win")
        .stage_script(flag(), vec![b("looks_switchbackdropto").m("BACKDROP", "looks_backdrops", "maze")])
        .sprite("Bat", |s| {
            s.script(
                flag(),
                vec![
                    b("looks_setsizeto").i("SIZE", num(40)),
                    go_to_xy(-200, 150),
                    forever(vec![
                        if_then(key_pressed("up arrow"), vec![change_y(3)]),
                        if_then(key_pressed("down arrow"), vec![change_y(-3)]),
                        if_then(key_pressed("left arrow"), vec![change_x(-3)]),
                        if_then(key_pressed("right arrow"), vec![change_x(3)]),
                        if_then(touching_color(wall), vec![go_to_xy(-200, 150)]),
                        if_then(touching("Goal"), vec![broadcast("win")]),
                    ]),
                ],
            )
            .script(on_receive("win"), vec![say_for("I made it!", 2), stop_all()])
        })
        .sprite("Goal", |s| {
            s.script(flag(), vec![go_to_xy(200, -150), forever(vec![turn_right(2)])])
        })
        .build()
}

fn ping_pong(buggy: bool) -> ProjectAst {
    ProjectBuilder::new()
        .global_var("score", 0)
        .message("lose")
        .sprite("Ball", |s| {
            let s = s.script(on_receive("lose"), vec![say_for("Game over!", 2), stop_all()]);
            if buggy {
                return s;
            }
            s.script(
                flag(),
                vec![
                    go_to_xy(0, 0),
                    point(45),
                    set_var("score", 0),
                    forever(vec![
                        move_steps(10),
                        b("motion_ifonedgebounce"),
                        if_then(
                            touching("Paddle"),
                            vec![turn_right(random(170, 190)), change_var("score", 1), move_steps(10)],
                        ),
                    ]),
                ],
            )
        })
        .sprite("Paddle", |s| {
            s.script(flag(), vec![go_to_xy(0, -150), forever(vec![set_x(b("sensing_mousex"))])])
        })
        .sprite("Line", |s| {
            s.script(
                flag(),
                vec![go_to_xy(0, -175), forever(vec![if_then(touching("Ball"), vec![broadcast("lose")])])],
            )
        })
        .build()
}

fn maze_game(buggy: bool) -> ProjectAst {
    let respawn = if buggy { go_to_xy(0, 0) } else { go_to_xy(-210, -150) };
    ProjectBuilder::new()
        .message("level up")
        .stage_script(on_receive("level up"), vec![b("looks_nextbackdrop")])
        .sprite("Player", |s| {
            s.script(
                flag(),
                vec![
                    go_to_xy(-210, -150),
                    point(90),
                    forever(vec![
                        if_then(key_pressed("right arrow"), vec![point(90), move_steps(3)]),
                        if_then(key_pressed("left arrow"), vec![point(-90), move_steps(3)]),
                        if_then(key_pressed("up arrow"), vec![change_y(3)]),
                        if_then(key_pressed("down arrow"), vec![change_y(-3)]),
                        if_then(touching("Wall"), vec![respawn]),
                        if_then(touching("Exit"), vec![broadcast("level up")]),
                    ]),
                ],
            )
            .script(on_receive("level up"), vec![go_to_xy(-210, -150), say_for("Next level!", 1)])
        })
        .sprite("Wall", |s| s.script(flag(), vec![go_to_xy(0, 0), show()]))
        .sprite("Exit", |s| s.script(flag(), vec![go_to_xy(210, 150)]))
        .build()
}

fn apple_farm(buggy: bool) -> ProjectAst {
    let mut drop = vec![
        go_to_xy(random(-200, 200), 170),
        show(),
        repeat_until(
            b("operator_or")
                .i("OPERAND1", ex(touching("Basket")))
                .i("OPERAND2", ex(op("operator_lt", ex(b("motion_yposition")), num(-170)))),
            vec![change_y(-5)],
        ),
        hide(),
        if_then(touching("Basket"), vec![change_var("apples", 1)]),
    ];
    if !buggy {
        drop.push(broadcast("drop"));
    }
    ProjectBuilder::new()
        .global_var("apples", 0)
        .message("drop")
        .stage_script(flag(), vec![set_var("apples", 0), wait(1), broadcast("drop")])
        .sprite("Apple", |s| s.script(flag(), vec![hide()]).script(on_receive("drop"), drop))
        .sprite("Basket", |s| {
            s.script(
                flag(),
                vec![
                    go_to_xy(0, -150),
                    forever(vec![
                        if_then(key_pressed("left arrow"), vec![change_x(-10)]),
                        if_then(key_pressed("right arrow"), vec![change_x(10)]),
                    ]),
                ],
            )
        })
        .sprite("Farmer", |s| {
            s.script(on_receive("drop"), vec![b("looks_thinkforsecs").i("MESSAGE", txt("Catch it!")).i("SECS", num(1))])
        })
        .build()
}

fn super_mario(buggy: bool) -> ProjectAst {
    let on_ground = if buggy { not(touching("Ground")) } else { touching("Ground") };
    ProjectBuilder::new()
        .global_var("coins", 0)
        .sprite("Mario", |s| {
            s.var("y speed", 0)
                .script(
                    flag(),
                    vec![
                        go_to_xy(-180, -100),
                        set_var("y speed", 0),
                        set_var("coins", 0),
                        forever(vec![
                            change_var("y speed", -1),
                            change_y(var("y speed")),
                            if_then(
                                on_ground,
                                vec![
                                    set_var("y speed", 0),
                                    if_then(key_pressed("up arrow"), vec![set_var("y speed", 12)]),
                                ],
                            ),
                        ]),
                    ],
                )
                .script(on_key("right arrow"), vec![change_x(5), b("looks_nextcostume")])
                .script(on_key("left arrow"), vec![change_x(-5), b("looks_nextcostume")])
        })
        .sprite("Ground", |s| s.script(flag(), vec![go_to_xy(0, -160)]))
        .sprite("Coin", |s| {
            s.script(
                flag(),
                vec![show(), go_to_xy(100, -80), wait_until(touching("Mario")), change_var("coins", 1), hide()],
            )
        })
        .sprite("Goomba", |s| {
            s.script(
                flag(),
                vec![
                    go_to_xy(200, -130),
                    forever(vec![repeat(40, vec![change_x(-2)]), repeat(40, vec![change_x(2)])]),
                ],
            )
        })
        .build()
}

fn snake_game(buggy: bool) -> ProjectAst {
    let join = if buggy { "operator_and" } else { "operator_or" };
    let dead = b(join).i("OPERAND1", ex(touching("_edge_"))).i("OPERAND2", ex(touching("Body")));
    ProjectBuilder::new()
        .global_var("length", 3)
        .sprite("Snake", |s| {
            s.script(
                flag(),
                vec![
                    go_to_xy(0, 0),
                    point(90),
                    set_var("length", 3),
                    forever(vec![move_steps(10), if_then(dead, vec![say_for("Game over", 1), stop_all()]), wait(0.1)]),
                ],
            )
            .script(on_key("up arrow"), vec![point(0)])
            .script(on_key("down arrow"), vec![point(180)])
            .script(on_key("left arrow"), vec![point(-90)])
            .script(on_key("right arrow"), vec![point(90)])
        })
        .sprite("Body", |s| {
            s.script(flag(), vec![hide(), forever(vec![go_to("Snake"), create_clone("_myself_"), wait(0.1)])])
                .script(
                    on_clone(),
                    vec![show(), wait(op("operator_multiply", var("length"), num(0.1))), b("control_delete_this_clone")],
                )
        })
        .sprite("Food", |s| {
            s.script(
                flag(),
                vec![
                    go_to_xy(random(-220, 220), random(-160, 160)),
                    forever(vec![if_then(
                        touching("Snake"),
                        vec![change_var("length", 1), go_to_xy(random(-220, 220), random(-160, 160))],
                    )]),
                ],
            )
        })
        .build()
}

fn scratch_clicker(buggy: bool) -> ProjectAst {
    let mut reset = vec![];
    if !buggy {
        reset.push(set_var("clicks", 0));
    }
    reset.extend([
        set_var("multiplier", 1),
        b("data_showvariable").f("VARIABLE", "clicks"),
        go_to_xy(0, 0),
    ]);
    ProjectBuilder::new()
        .global_var("clicks", 0)
        .global_var("multiplier", 1)
        .stage_script(flag(), vec![b("looks_switchbackdropto").m("BACKDROP", "looks_backdrops", "shop")])
        .sprite("Button", |s| {
            s.script(flag(), reset).script(
                on_click(),
                vec![
                    change_var("clicks", var("multiplier")),
                    b("looks_changesizeby").i("CHANGE", num(10)),
                    wait(0.1),
                    b("looks_changesizeby").i("CHANGE", num(-10)),
                ],
            )
        })
        .sprite("Upgrade", |s| {
            s.script(flag(), vec![go_to_xy(150, -120)]).script(
                on_click(),
                vec![if_else(
                    op("operator_gt", var("clicks"), num(49)),
                    vec![change_var("clicks", -50), change_var("multiplier", 1), say_for("Upgraded!", 1)],
                    vec![say_for("Need 50 clicks", 1)],
                )],
            )
        })
        .build()
}

fn cat_adventure(buggy: bool) -> ProjectAst {
    let heard = if buggy { "start" } else { "start quest" };
    let mut p = ProjectBuilder::new().message("start quest").message("found it");
    if buggy {
        p = p.message("start");
    }
    p.sprite("Cat", |s| {
        s.script(
            flag(),
            vec![go_to_xy(-150, -100), say_for("Let's go on an adventure!", 2), broadcast("start quest")],
        )
        .script(on_receive("found it"), vec![say_for("Hooray!", 2)])
    })
    .sprite("Dog", |s| {
        s.script(flag(), vec![go_to_xy(150, -100), hide()]).script(
            on_receive(heard),
            vec![
                show(),
                say_for("Follow me!", 2),
                b("motion_glidesecstoxy").i("SECS", num(2)).i("X", num(0)).i("Y", num(0)),
                broadcast("found it"),
            ],
        )
    })
    .sprite("Treasure", |s| {
        s.script(flag(), vec![hide()])
            .script(on_receive("found it"), vec![show(), repeat(10, vec![b("looks_changesizeby").i("CHANGE", num(5))])])
    })
    .build()
}

fn platformer(buggy: bool) -> ProjectAst {
    let start = if buggy {
        vec![show(), go_to_xy(-200, -100)]
    } else {
        vec![go_to_xy(-200, -100), show()]
    };
    let mut body = vec![b("motion_setrotationstyle").f("STYLE", "left-right")];
    body.extend(start);
    body.extend([
        set_var("gravity", 0),
        forever(vec![
            change_var("gravity", -1),
            change_y(var("gravity")),
            if_then(touching("Platform"), vec![change_y(op("operator_multiply", var("gravity"), num(-1))), set_var("gravity", 0)]),
            if_then(key_pressed("right arrow"), vec![point(90), move_steps(4)]),
            if_then(key_pressed("left arrow"), vec![point(-90), move_steps(4)]),
        ]),
    ]);
    ProjectBuilder::new()
        .message("win")
        .sprite("Player", |s| {
            s.var("gravity", 0)
                .script(flag(), body)
                .script(
                    on_key("space"),
                    vec![if_then(touching("Platform"), vec![set_var("gravity", 12)])],
                )
                .script(on_receive("win"), vec![say_for("You win!", 2), stop_all()])
        })
        .sprite("Platform", |s| s.script(flag(), vec![go_to_xy(0, -150)]))
        .sprite("Goal", |s| {
            s.script(flag(), vec![go_to_xy(210, 120), wait_until(touching("Player")), broadcast("win")])
        })
        .build()
}

const SCALE_STATEMENTS: usize = 12;

fn random_statement(rng: &mut ChaCha8Rng, vars: &[String], sprites: &[String], depth: usize) -> BlockNode {
    let n = |rng: &mut ChaCha8Rng| rng.gen_range(-50..=50i64);
    let v = |rng: &mut ChaCha8Rng| vars.choose(rng).cloned().unwrap_or_else(|| "v".into());
    let s = |rng: &mut ChaCha8Rng| sprites.choose(rng).cloned().unwrap_or_else(|| "_edge_".into());
    let pick = if depth >= 2 { rng.gen_range(0..8) } else { rng.gen_range(0..SCALE_STATEMENTS) };
    match pick {
        0 => move_steps(n(rng)),
        1 => change_x(n(rng)),
        2 => change_y(n(rng)),
        3 => turn_right(n(rng)),
        4 => set_var(&v(rng), n(rng)),
        5 => change_var(&v(rng), op("operator_add", var(&v(rng)), num(n(rng)))),
        6 => say_for(&format!("hello {}", n(rng)), 1),
        7 => wait(rng.gen_range(1..5)),
        8 => {
            let body = (0..rng.gen_range(1..4)).map(|_| random_statement(rng, vars, sprites, depth + 1)).collect();
            if_then(
                b("operator_and")
                    .i("OPERAND1", ex(touching(&s(rng))))
                    .i("OPERAND2", ex(op("operator_gt", var(&v(rng)), num(n(rng))))),
                body,
            )
        }
        9 => {
            let body = (0..rng.gen_range(1..4)).map(|_| random_statement(rng, vars, sprites, depth + 1)).collect();
            repeat(rng.gen_range(2..10), body)
        }
        10 => {
            let a = (0..rng.gen_range(1..3)).map(|_| random_statement(rng, vars, sprites, depth + 1)).collect();
            let c = (0..rng.gen_range(1..3)).map(|_| random_statement(rng, vars, sprites, depth + 1)).collect();
            if_else(not(touching(&s(rng))), a, c)
        }
        _ => go_to_xy(random(-200, 200), n(rng)),
    }
}

/// A random project with `sprites` sprites and roughly `blocks` blocks.
pub fn scale_project(seed: u64, sprites: usize, blocks: usize) -> ProjectAst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..sprites).map(|i| format!("Sprite{}", i + 1)).collect();
    let globals: Vec<String> = (0..4).map(|i| format!("g{i}")).collect();
    let mut builder = ProjectBuilder::new().message("go");
    for g in &globals {
        builder = builder.global_var(g, 0);
    }
    let mut project = builder.build();
    let per_sprite = blocks / sprites.max(1);
    for name in &names {
        let mut t = Target::new(name.clone(), false);
        let local = format!("{name} speed");
        t.variables.insert(
            entity_id(name, &local),
            Variable {
                name: local.clone(),
                value: Value::from(0),
                cloud: false,
            },
        );
        let mut vars = globals.clone();
        vars.push(local);
        let hats = [flag(), on_click(), on_receive("go"), on_key("space")];
        let mut count = 0;
        let mut k = 0;
        while count < per_sprite {
            let hat = hats[k % hats.len()].clone();
            let mut body = Vec::new();
            let len = rng.gen_range(3..8);
            for _ in 0..len {
                body.push(random_statement(&mut rng, &vars, &names, 0));
            }
            if k == 0 {
                body.push(broadcast("go"));
            }
            let script = script_at(hat, body, k);
            count += script.block_count();
            t.scripts.push(script);
            k += 1;
        }
        project.targets.push(t);
    }
    project.assign_fresh_ids();
    project
}

/// Change one literal somewhere in the project.
pub fn perturb_literal(project: &ProjectAst, seed: u64) -> ProjectAst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = project.clone();
    let mut total = 0usize;
    for t in &mut p.targets {
        for s in &mut t.scripts {
            s.walk_values_mut(&mut |v| {
                if matches!(v, InputValue::Literal(l) if l.kind == LiteralKind::Number) {
                    total += 1;
                }
            });
        }
    }
    if total == 0 {
        return p;
    }
    let target = rng.gen_range(0..total);
    let mut i = 0usize;
    for t in &mut p.targets {
        for s in &mut t.scripts {
            s.walk_values_mut(&mut |v| {
                if let InputValue::Literal(l) = v {
                    if l.kind == LiteralKind::Number {
                        if i == target {
                            l.value = format!("{}1", l.value);
                        }
                        i += 1;
                    }
                }
            });
        }
    }
    p
}

/// Behavior-preserving rewrites of a project.
pub mod mutate {
    use std::collections::HashMap;

    use super::*;

    fn for_each_block(p: &mut ProjectAst, f: &mut impl FnMut(&mut BlockNode)) {
        for t in &mut p.targets {
            for s in &mut t.scripts {
                s.walk_mut(f);
            }
        }
    }

    /// Give every variable, list, broadcast and custom block a new name.
    pub fn alpha_rename(project: &ProjectAst, rng: &mut ChaCha8Rng) -> ProjectAst {
        let mut p = project.clone();
        let mut map: HashMap<(EntityKind, String), String> = HashMap::new();
        fn fresh(
            map: &mut HashMap<(EntityKind, String), String>,
            kind: EntityKind,
            old: &str,
            rng: &mut ChaCha8Rng,
        ) -> String {
            map.entry((kind, old.to_string()))
                .or_insert_with(|| format!("{}{}", kind.prefix(), rng.gen_range(100_000..1_000_000)))
                .clone()
        }
        for t in &mut p.targets {
            for v in t.variables.values_mut() {
                v.name = fresh(&mut map, EntityKind::Variable, &v.name, rng);
            }
            for l in t.lists.values_mut() {
                l.name = fresh(&mut map, EntityKind::List, &l.name, rng);
            }
        }
        for name in p.broadcasts.values_mut() {
            *name = fresh(&mut map, EntityKind::Broadcast, name, rng);
        }
        let mut codes = Vec::new();
        for_each_block(&mut p, &mut |b| {
            if let Some(code) = b.proccode() {
                codes.push(code.to_string());
            }
        });
        for code in codes {
            if map.contains_key(&(EntityKind::Procedure, code.clone())) {
                continue;
            }
            let mut new = fresh(&mut map, EntityKind::Procedure, &code, rng);
            for a in code.split(' ').filter(|w| *w == "%s" || *w == "%b") {
                new.push(' ');
                new.push_str(a);
            }
            map.insert((EntityKind::Procedure, code), new);
        }
        for t in &mut p.targets {
            for s in &mut t.scripts {
                if let Some(h) = s.hat.as_mut() {
                    crate::normalize::relabel_block(h, &|k, n| map.get(&(k, n.to_string())).cloned());
                }
                for blk in &mut s.body.blocks {
                    crate::normalize::relabel_block(blk, &|k, n| map.get(&(k, n.to_string())).cloned());
                }
                s.refresh_trigger();
            }
        }
        p
    }

    /// Swap operands of commutative operators at random.
    pub fn commute(project: &ProjectAst, rng: &mut ChaCha8Rng) -> ProjectAst {
        let mut p = project.clone();
        for_each_block(&mut p, &mut |b| {
            let Some((x, y)) = catalog::commutative_operands(&b.opcode) else { return };
            if !rng.gen_bool(0.5) {
                return;
            }
            let xv = b.input(x).map(|s| s.value.clone());
            let yv = b.input(y).map(|s| s.value.clone());
            if let (Some(xv), Some(yv)) = (xv, yv) {
                b.input_mut(x).expect("checked").value = yv;
                b.input_mut(y).expect("checked").value = xv;
            }
        });
        p
    }

    fn is_boolean(v: &InputValue) -> bool {
        matches!(v, InputValue::Expression(b)
            if catalog::lookup(&b.opcode).is_some_and(|e| e.shape == catalog::Shape::Boolean))
    }

    /// Push negations through conjunctions and disjunctions.
    pub fn de_morgan(project: &ProjectAst, rng: &mut ChaCha8Rng) -> ProjectAst {
        let mut p = project.clone();
        for_each_block(&mut p, &mut |blk| {
            for slot in &mut blk.inputs {
                let InputValue::Expression(e) = &slot.value else { continue };
                let (dual, a, c) = match e.opcode.as_str() {
                    "operator_and" => ("operator_or", "OPERAND1", "OPERAND2"),
                    "operator_or" => ("operator_and", "OPERAND1", "OPERAND2"),
                    _ => continue,
                };
                let (Some(x), Some(y)) = (e.input(a), e.input(c)) else { continue };
                if !is_boolean(&x.value) || !is_boolean(&y.value) || !rng.gen_bool(0.7) {
                    continue;
                }
                let neg = |v: &InputValue| b("operator_not").i("OPERAND", v.clone());
                let inner = b(dual).i(a, ex(neg(&x.value))).i(c, ex(neg(&y.value)));
                slot.value = ex(not(inner));
            }
        });
        p
    }

    /// Wrap boolean inputs in a double negation.
    pub fn double_negation(project: &ProjectAst, rng: &mut ChaCha8Rng) -> ProjectAst {
        let mut p = project.clone();
        for_each_block(&mut p, &mut |blk| {
            for slot in &mut blk.inputs {
                if is_boolean(&slot.value) && rng.gen_bool(0.3) {
                    let v = std::mem::replace(&mut slot.value, InputValue::Empty);
                    slot.value = ex(not(not_value(v)));
                }
            }
        });
        p
    }

    fn not_value(v: InputValue) -> BlockNode {
        b("operator_not").i("OPERAND", v)
    }

    /// Edits that only touch layout and bookkeeping: script order and
    /// position, block ids, variable values and sprite order.
    pub fn noise(project: &ProjectAst, rng: &mut ChaCha8Rng) -> ProjectAst {
        let mut p = project.without_block_ids();
        for t in &mut p.targets {
            t.scripts.shuffle(rng);
            for s in &mut t.scripts {
                s.placement.x = Some(rng.gen_range(-500.0..500.0));
                s.placement.y = Some(rng.gen_range(-500.0..500.0));
            }
            for v in t.variables.values_mut() {
                v.value = Value::from(rng.gen_range(0..100));
            }
        }
        let (stage, mut sprites): (Vec<Target>, Vec<Target>) = p.targets.drain(..).partition(|t| t.is_stage);
        sprites.shuffle(rng);
        p.targets = stage.into_iter().chain(sprites).collect();
        p.assign_fresh_ids();
        p
    }

    /// All of the above.
    pub fn equivalent_variant(project: &ProjectAst, seed: u64) -> ProjectAst {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = alpha_rename(project, &mut rng);
        let p = commute(&p, &mut rng);
        let p = de_morgan(&p, &mut rng);
        let p = double_negation(&p, &mut rng);
        noise(&p, &mut rng)
    }
}

pub const STUDENT_FILE: &str = "student.sb3";
pub const TEACHER_FILE: &str = "teacher.sb3";
pub const EXPECTED_FILE: &str = "expected.json";

/// Write fixtures as `<dir>/<slug>/{student.sb3,teacher.sb3,expected.json}`.
pub fn write_corpus(dir: &Path, fixtures: &[Fixture]) -> std::io::Result<()> {
    let to_io = |e: LoadError| std::io::Error::other(e.to_string());
    for f in fixtures {
        let d = dir.join(f.slug());
        fs::create_dir_all(&d)?;
        fs::write(d.join(STUDENT_FILE), write_sb3(&f.student, &[]).map_err(to_io)?)?;
        fs::write(d.join(TEACHER_FILE), write_sb3(&f.teacher, &[]).map_err(to_io)?)?;
        let expected = serde_json::json!({"name": f.name, "bug": f.bug});
        fs::write(d.join(EXPECTED_FILE), serde_json::to_string_pretty(&expected)?)?;
    }
    Ok(())
}

/// Write `variants` behavior-preserving variants of each fixture's
/// reference, paired with that reference and expected to diff clean.
pub fn write_equivalence_corpus(dir: &Path, fixtures: &[Fixture], variants: u64) -> std::io::Result<usize> {
    let to_io = |e: LoadError| std::io::Error::other(e.to_string());
    let mut n = 0;
    for (k, f) in fixtures.iter().enumerate() {
        for seed in 0..variants {
            let d = dir.join(format!("{}-v{seed}", f.slug()));
            fs::create_dir_all(&d)?;
            let variant = mutate::equivalent_variant(&f.teacher, seed * 1000 + k as u64);
            fs::write(d.join(STUDENT_FILE), write_sb3(&variant, &[]).map_err(to_io)?)?;
            fs::write(d.join(TEACHER_FILE), write_sb3(&f.teacher, &[]).map_err(to_io)?)?;
            let expected = serde_json::json!({"name": format!("{} v{seed}", f.name), "equivalent": true});
            fs::write(d.join(EXPECTED_FILE), serde_json::to_string_pretty(&expected)?)?;
            n += 1;
        }
    }
    Ok(n)
}

/// A pair directory as found on disk.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub student: Result<ProjectAst, String>,
    pub teacher: Result<ProjectAst, String>,
    pub bug: Option<SeededBug>,
}

fn load_side(dir: &Path, stem: &str) -> Result<ProjectAst, String> {
    for ext in ["sb3", "json"] {
        let path = dir.join(format!("{stem}.{ext}"));
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            return load_project(&bytes).map_err(|e| format!("{}: {e}", path.display()));
        }
    }
    Err(format!("{}: no {stem}.sb3 or {stem}.json", dir.display()))
}

/// Read every pair directory under `dir`, sorted by name.
pub fn read_corpus(dir: &Path) -> std::io::Result<Vec<CorpusEntry>> {
    let mut dirs: Vec<_> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs
        .into_iter()
        .map(|d| {
            let bug = fs::read_to_string(d.join(EXPECTED_FILE))
                .ok()
                .and_then(|t| serde_json::from_str::<Value>(&t).ok())
                .and_then(|v| serde_json::from_value(v["bug"].clone()).ok());
            CorpusEntry {
                name: d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                student: load_side(&d, "student"),
                teacher: load_side(&d, "teacher"),
                bug,
            }
        })
        .collect())
}
