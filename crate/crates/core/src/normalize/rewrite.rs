//! Expression-level rewrites: De Morgan / double negation and commutative
//! operand ordering.

use std::cmp::Ordering;

use crate::sb3::catalog;
use crate::sb3::{BlockNode, EntityKind, InputSlot, InputValue, Literal};

/// Total structural ordering key for an input value.
///
/// Compares by opcode, then by literal (numbers normalized so `10` and
/// `10.0` agree), then by child keys, then by the raw literal text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SortKey {
    opcode: String,
    literal: String,
    children: Vec<SortKey>,
    raw: String,
}

/// Resolves an entity reference to the name used inside sort keys.
pub type NameFn<'a> = &'a dyn Fn(EntityKind, &str) -> String;

impl SortKey {
    pub fn of_value(value: &InputValue, names: NameFn<'_>) -> SortKey {
        match value {
            InputValue::Empty => SortKey::leaf("", "", ""),
            InputValue::Literal(lit) => SortKey::leaf("", &numeric_key(lit), &lit.value),
            InputValue::Variable(r) => {
                SortKey::leaf("data_variable", &names(EntityKind::Variable, &r.name), "")
            }
            InputValue::List(r) => SortKey::leaf("data_listcontents", &names(EntityKind::List, &r.name), ""),
            InputValue::Broadcast(r) => {
                SortKey::leaf("event_broadcast_menu", &names(EntityKind::Broadcast, &r.name), "")
            }
            InputValue::Expression(b) => SortKey::of_block(b, names),
        }
    }

    pub fn of_block(block: &BlockNode, names: NameFn<'_>) -> SortKey {
        let mut literal = String::new();
        if let Some(code) = block.proccode() {
            literal.push_str(&names(EntityKind::Procedure, code));
            literal.push('|');
        }
        let mut fields: Vec<_> = block.fields.iter().collect();
        fields.sort_by(|a, b| a.name.cmp(&b.name));
        for f in fields {
            let value = match EntityKind::from_field(&f.name) {
                Some(kind) => names(kind, &f.value),
                None => f.value.clone(),
            };
            literal.push_str(&f.name);
            literal.push('=');
            literal.push_str(&value);
            literal.push(';');
        }
        let mut inputs: Vec<&InputSlot> = block.inputs.iter().collect();
        inputs.sort_by(|a, b| a.name.cmp(&b.name));
        let mut children = Vec::with_capacity(inputs.len() + block.substacks.len());
        for slot in inputs {
            children.push(SortKey {
                opcode: slot.name.clone(),
                literal: String::new(),
                children: vec![SortKey::of_value(&slot.value, names)],
                raw: String::new(),
            });
        }
        for seq in &block.substacks {
            children.push(SortKey {
                opcode: "{".into(),
                literal: String::new(),
                children: seq.blocks.iter().map(|b| SortKey::of_block(b, names)).collect(),
                raw: String::new(),
            });
        }
        SortKey {
            opcode: block.opcode.clone(),
            literal,
            children,
            raw: String::new(),
        }
    }

    fn leaf(opcode: &str, literal: &str, raw: &str) -> SortKey {
        SortKey {
            opcode: opcode.to_string(),
            literal: literal.to_string(),
            children: Vec::new(),
            raw: raw.to_string(),
        }
    }

    /// True when any entity name inside the key is `placeholder`.
    pub fn mentions(&self, placeholder: &str) -> bool {
        self.literal.contains(placeholder) || self.children.iter().any(|c| c.mentions(placeholder))
    }
}

/// Names as they appear in the AST.
pub fn identity_names(_: EntityKind, name: &str) -> String {
    name.to_string()
}

fn numeric_key(lit: &Literal) -> String {
    match lit.value.trim().parse::<f64>() {
        Ok(n) if n.is_finite() && !lit.value.trim().is_empty() => {
            // fixed width so lexical order matches numeric order
            let bits = n.to_bits();
            let ordered = if n.is_sign_negative() { !bits } else { bits | (1 << 63) };
            format!("#{ordered:016x}")
        }
        _ => format!("'{}", lit.value),
    }
}

/// Input names of a two-operand commutative opcode.
fn operands(block: &BlockNode) -> Option<(&'static str, &'static str)> {
    catalog::commutative_operands(&block.opcode)
}

fn take_input(block: &mut BlockNode, name: &str) -> InputValue {
    match block.inputs.iter().position(|s| s.name == name) {
        Some(i) => block.inputs.remove(i).value,
        None => InputValue::Empty,
    }
}

fn put_input(block: &mut BlockNode, name: &str, value: InputValue) {
    if matches!(value, InputValue::Empty) {
        return;
    }
    block.inputs.push(InputSlot {
        name: name.to_string(),
        value,
        obscured: None,
    });
    block.inputs.sort_by(|a, b| a.name.cmp(&b.name));
}

/// Sort the operands of commutative opcodes, bottom-up.
pub fn canonical_order(expr: &BlockNode) -> BlockNode {
    canonical_order_with(expr.clone(), &identity_names)
}

pub(crate) fn canonical_order_with(mut expr: BlockNode, names: NameFn<'_>) -> BlockNode {
    for slot in &mut expr.inputs {
        slot.value = order_value(std::mem::replace(&mut slot.value, InputValue::Empty), names);
    }
    if let Some((left, right)) = operands(&expr) {
        let a = take_input(&mut expr, left);
        let b = take_input(&mut expr, right);
        let (a, b) = match SortKey::of_value(&a, names).cmp(&SortKey::of_value(&b, names)) {
            Ordering::Greater => (b, a),
            _ => (a, b),
        };
        put_input(&mut expr, left, a);
        put_input(&mut expr, right, b);
    }
    expr
}

pub(crate) fn order_value(value: InputValue, names: NameFn<'_>) -> InputValue {
    match value {
        InputValue::Expression(b) => InputValue::Expression(Box::new(canonical_order_with(*b, names))),
        other => other,
    }
}

/// Push negations inward (De Morgan) and drop double negations until no
/// rule applies. One bottom-up pass reaches the fixpoint: children are
/// normalized before their parent, and every negation created while pushing
/// inward wraps a strictly smaller, already-normal operand.
pub fn algebraic_rewrite(expr: &BlockNode) -> InputValue {
    rewrite_value(InputValue::Expression(Box::new(expr.clone())))
}

pub(crate) fn rewrite_value(value: InputValue) -> InputValue {
    let InputValue::Expression(block) = value else {
        return value;
    };
    let mut block = *block;
    for slot in &mut block.inputs {
        slot.value = rewrite_value(std::mem::replace(&mut slot.value, InputValue::Empty));
    }
    block.inputs.retain(|s| !matches!(s.value, InputValue::Empty) || s.obscured.is_some());
    if block.opcode == "operator_not" {
        let operand = take_input(&mut block, "OPERAND");
        return negate_normal(operand, block);
    }
    InputValue::Expression(Box::new(block))
}

/// `not(operand)` where `operand` is already in normal form. `shell` is the
/// original negation block, reused when no rule fires.
fn negate_normal(operand: InputValue, mut shell: BlockNode) -> InputValue {
    match operand {
        InputValue::Expression(inner) if inner.opcode == "operator_not" => {
            let mut inner = *inner;
            take_input(&mut inner, "OPERAND")
        }
        InputValue::Expression(inner)
            if inner.opcode == "operator_and" || inner.opcode == "operator_or" =>
        {
            let mut inner = *inner;
            let dual = if inner.opcode == "operator_and" {
                "operator_or"
            } else {
                "operator_and"
            };
            let left = take_input(&mut inner, "OPERAND1");
            let right = take_input(&mut inner, "OPERAND2");
            let mut out = BlockNode::new(dual);
            put_input(&mut out, "OPERAND1", negate_normal(left, BlockNode::new("operator_not")));
            put_input(&mut out, "OPERAND2", negate_normal(right, BlockNode::new("operator_not")));
            InputValue::Expression(Box::new(out))
        }
        other => {
            put_input(&mut shell, "OPERAND", other);
            InputValue::Expression(Box::new(shell))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3::{EntityRef, LiteralKind};

    fn var(name: &str) -> InputValue {
        InputValue::Variable(EntityRef {
            name: name.into(),
            id: None,
        })
    }

    fn num(v: &str) -> InputValue {
        InputValue::Literal(Literal {
            kind: LiteralKind::Number,
            value: v.into(),
        })
    }

    fn op(opcode: &str, slots: &[(&str, InputValue)]) -> BlockNode {
        let mut b = BlockNode::new(opcode);
        for (name, v) in slots {
            put_input(&mut b, name, v.clone());
        }
        b
    }

    fn expr(b: BlockNode) -> InputValue {
        InputValue::Expression(Box::new(b))
    }

    fn touching(what: &str) -> InputValue {
        let mut menu = BlockNode::new("sensing_touchingobjectmenu");
        menu.shadow = true;
        menu.fields.push(crate::sb3::FieldSlot {
            name: "TOUCHINGOBJECTMENU".into(),
            value: what.into(),
            id: None,
        });
        expr(op("sensing_touchingobject", &[("TOUCHINGOBJECTMENU", expr(menu))]))
    }

    #[test]
    fn addition_operands_commute() {
        let ab = op("operator_add", &[("NUM1", var("a")), ("NUM2", var("b"))]);
        let ba = op("operator_add", &[("NUM1", var("b")), ("NUM2", var("a"))]);
        assert_eq!(canonical_order(&ab), canonical_order(&ba));
    }

    #[test]
    fn ordering_is_idempotent() {
        let e = op("operator_add", &[("NUM1", num("3")), ("NUM2", var("x"))]);
        let once = canonical_order(&e);
        assert_eq!(canonical_order(&once), once);
    }

    #[test]
    fn subtraction_is_not_reordered() {
        let ab = op("operator_subtract", &[("NUM1", var("a")), ("NUM2", var("b"))]);
        let ba = op("operator_subtract", &[("NUM1", var("b")), ("NUM2", var("a"))]);
        assert_ne!(canonical_order(&ab), canonical_order(&ba));
    }

    #[test]
    fn numeric_literals_order_numerically() {
        let e = op("operator_add", &[("NUM1", num("10")), ("NUM2", num("9"))]);
        let c = canonical_order(&e);
        assert_eq!(c.input("NUM1").unwrap().value, num("9"));
        let neg = op("operator_add", &[("NUM1", num("-1")), ("NUM2", num("-5"))]);
        assert_eq!(canonical_order(&neg).input("NUM1").unwrap().value, num("-5"));
    }

    #[test]
    fn de_morgan_and() {
        let a = touching("edge");
        let b = touching("Wall");
        let lhs = op("operator_not", &[("OPERAND", expr(op("operator_and", &[("OPERAND1", a.clone()), ("OPERAND2", b.clone())])))]);
        let rhs = op(
            "operator_or",
            &[
                ("OPERAND1", expr(op("operator_not", &[("OPERAND", a)]))),
                ("OPERAND2", expr(op("operator_not", &[("OPERAND", b)]))),
            ],
        );
        assert_eq!(algebraic_rewrite(&lhs), algebraic_rewrite(&rhs));
    }

    #[test]
    fn double_negation_elimination() {
        let a = touching("edge");
        let nn = op("operator_not", &[("OPERAND", expr(op("operator_not", &[("OPERAND", a.clone())])))]);
        assert_eq!(algebraic_rewrite(&nn), a);
    }

    #[test]
    fn conjunction_without_redex_is_unchanged() {
        let e = op("operator_and", &[("OPERAND1", touching("a")), ("OPERAND2", touching("b"))]);
        assert_eq!(algebraic_rewrite(&e), expr(e.clone()));
    }

    #[test]
    fn nested_negations_reach_fixpoint_in_one_pass() {
        // not(not(a or not b) and c)
        let inner = op(
            "operator_not",
            &[(
                "OPERAND",
                expr(op(
                    "operator_or",
                    &[
                        ("OPERAND1", touching("a")),
                        ("OPERAND2", expr(op("operator_not", &[("OPERAND", touching("b"))]))),
                    ],
                )),
            )],
        );
        let e = op(
            "operator_not",
            &[("OPERAND", expr(op("operator_and", &[("OPERAND1", expr(inner)), ("OPERAND2", touching("c"))])))],
        );
        let once = algebraic_rewrite(&e);
        let InputValue::Expression(b) = &once else { panic!() };
        assert_eq!(algebraic_rewrite(b), once);
        // (a or not b) or not c
        assert_eq!(b.opcode, "operator_or");
    }
}
