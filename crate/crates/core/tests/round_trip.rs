use stitch::corpus::{b, color, num, scale_project, seeded_pairs, txt, BlockBuilder};
use stitch::diff::diff_projects;
use stitch::render::{to_render_spec, to_text, RenderShape};
use stitch::sb3::catalog::{entries, CatalogEntry, Shape, SlotKind};
use stitch::sb3::{load_project, load_sb3, serialize_project, write_sb3, BlockNode, EntityRef, InputValue};

#[test]
fn fixtures_survive_the_container() {
    for f in seeded_pairs() {
        for p in [&f.student, &f.teacher] {
            let back = load_sb3(&write_sb3(p, &[]).unwrap()).unwrap().project;
            assert_eq!(serialize_project(&back), serialize_project(p), "{}", f.name);
        }
    }
}

#[test]
fn fixtures_survive_the_bare_document() {
    for f in seeded_pairs() {
        let doc = serialize_project(&f.teacher);
        let back = load_project(doc.as_bytes()).unwrap();
        assert_eq!(serialize_project(&back), doc, "{}", f.name);
        assert!(diff_projects(&back, &f.teacher).unwrap().items.is_empty());
    }
}

#[test]
fn scale_projects_survive_the_container() {
    for seed in 0..10 {
        let p = scale_project(seed, 7, 150);
        let back = load_sb3(&write_sb3(&p, &[]).unwrap()).unwrap().project;
        assert_eq!(serialize_project(&back), serialize_project(&p), "seed {seed}");
    }
}

fn sample(entry: &CatalogEntry) -> BlockNode {
    let mut block = b(entry.opcode);
    for slot in entry.slots {
        block = match slot.kind {
            SlotKind::Number => block.i(slot.name, num(1)),
            SlotKind::Text => block.i(slot.name, txt("a")),
            SlotKind::Color => block.i(slot.name, color("#ff0000")),
            SlotKind::Broadcast => block.i(slot.name, InputValue::Broadcast(EntityRef { name: "go".into(), id: None })),
            SlotKind::Field => block.f(slot.name, "x"),
            SlotKind::Boolean | SlotKind::Menu | SlotKind::Prototype => block,
        };
    }
    for _ in 0..entry.substacks {
        block = block.sub(vec![b("looks_show")]);
    }
    block
}

fn expected_shape(shape: Shape) -> RenderShape {
    match shape {
        Shape::Hat => RenderShape::Hat,
        Shape::Stack => RenderShape::Stack,
        Shape::CBlock => RenderShape::CBlock,
        Shape::Reporter => RenderShape::Reporter,
        Shape::Boolean => RenderShape::Boolean,
        Shape::Cap => RenderShape::Cap,
    }
}

#[test]
fn every_catalog_entry_renders_without_fallback() {
    let mut rendered = 0;
    for entry in entries().iter().filter(|e| !e.menu && !e.opcode.starts_with("procedures_")) {
        let block = sample(entry);
        let specs = to_render_spec(&block, &[]);
        assert_eq!(specs.len(), 1, "{}", entry.opcode);
        let spec = &specs[0];
        assert!(!spec.fallback, "{}", entry.opcode);
        assert_eq!(spec.shape, expected_shape(entry.shape), "{}", entry.opcode);
        assert_eq!(spec.category, entry.category, "{}", entry.opcode);
        assert_eq!(spec.color_hex, entry.category.color_hex(), "{}", entry.opcode);
        assert_eq!(spec.opcode.as_deref(), Some(entry.opcode));
        assert_eq!(spec.text_lines(), to_text(&block), "{}", entry.opcode);
        assert!(!to_text(&block)[0].is_empty(), "{}", entry.opcode);
        rendered += 1;
    }
    assert!(rendered > 100, "{rendered}");
}

#[test]
fn unknown_opcodes_fall_back_to_text() {
    let block = b("pen_clear");
    let spec = &to_render_spec(&block, &[])[0];
    assert!(spec.fallback);
    assert_eq!(spec.text_lines(), to_text(&block));
}
