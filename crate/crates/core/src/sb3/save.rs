use std::collections::BTreeMap;
use std::io::{Cursor, Write};

use serde_json::{json, Map, Value};

use super::{BlockNode, BlockSeq, EntityRef, InputValue, ProjectAst, Script, Target};
use super::{Asset, LoadError};

/// Write the project document. Blocks keep their source ids where those are
/// unique; blocks without one get fresh ids.
pub fn serialize_project(ast: &ProjectAst) -> String {
    document(ast).to_string()
}

pub fn serialize_project_pretty(ast: &ProjectAst) -> String {
    serde_json::to_string_pretty(&document(ast)).expect("project document is valid JSON")
}

/// Pack the project and its media entries into an `.sb3` container.
pub fn write_sb3(ast: &ProjectAst, assets: &[Asset]) -> Result<Vec<u8>, LoadError> {
    let mut buf = Cursor::new(Vec::new());
    {
        let mut zip = zip::ZipWriter::new(&mut buf);
        let options = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated);
        let err = |e: zip::result::ZipError| LoadError::MalformedContainer(e.to_string());
        zip.start_file("project.json", options).map_err(err)?;
        zip.write_all(serialize_project(ast).as_bytes())
            .map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
        for asset in assets {
            zip.start_file(asset.name.as_str(), options).map_err(err)?;
            zip.write_all(&asset.bytes)
                .map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
        }
        zip.finish().map_err(err)?;
    }
    Ok(buf.into_inner())
}

fn document(ast: &ProjectAst) -> Value {
    let mut ast = ast.clone();
    ast.assign_fresh_ids();
    let stage_vars = ast.stage().cloned().unwrap_or_default();

    let mut root = Map::new();
    let targets = ast
        .targets
        .iter()
        .map(|t| target_document(t, &stage_vars, &ast.broadcasts))
        .collect();
    root.insert("targets".into(), Value::Array(targets));
    for (k, v) in &ast.extra {
        root.insert(k.clone(), v.clone());
    }
    Value::Object(root)
}

fn target_document(
    target: &Target,
    stage: &Target,
    broadcasts: &BTreeMap<String, String>,
) -> Value {
    let mut obj = Map::new();
    obj.insert("isStage".into(), Value::Bool(target.is_stage));
    obj.insert("name".into(), Value::String(target.name.clone()));
    let variables: Map<String, Value> = target
        .variables
        .iter()
        .map(|(id, v)| {
            let mut parts = vec![Value::String(v.name.clone()), v.value.clone()];
            if v.cloud {
                parts.push(Value::Bool(true));
            }
            (id.clone(), Value::Array(parts))
        })
        .collect();
    obj.insert("variables".into(), Value::Object(variables));
    let lists: Map<String, Value> = target
        .lists
        .iter()
        .map(|(id, l)| (id.clone(), json!([l.name, l.items])))
        .collect();
    obj.insert("lists".into(), Value::Object(lists));
    let declared: Map<String, Value> = broadcasts
        .iter()
        .filter(|_| target.is_stage)
        .map(|(id, name)| (id.clone(), Value::String(name.clone())))
        .collect();
    obj.insert("broadcasts".into(), Value::Object(declared));

    let mut writer = BlockWriter {
        table: Map::new(),
        target,
        stage,
        broadcasts,
    };
    for script in &target.scripts {
        writer.script(script);
    }
    obj.insert("blocks".into(), Value::Object(writer.table));
    for (k, v) in &target.extra {
        obj.insert(k.clone(), v.clone());
    }
    Value::Object(obj)
}

struct BlockWriter<'a> {
    table: Map<String, Value>,
    target: &'a Target,
    stage: &'a Target,
    broadcasts: &'a BTreeMap<String, String>,
}

fn id_of(block: &BlockNode) -> String {
    block
        .meta
        .id
        .clone()
        .expect("ids are assigned before writing")
}

impl BlockWriter<'_> {
    fn script(&mut self, script: &Script) {
        let top = match &script.hat {
            Some(hat) => {
                let next = script.body.blocks.first().map(id_of);
                let id = self.block(hat, None, next);
                self.seq(&script.body, Some(&id));
                Some(id)
            }
            None => self.seq(&script.body, None),
        };
        let Some(top) = top else { return };
        if let Some(Value::Object(obj)) = self.table.get_mut(&top) {
            obj.insert("topLevel".into(), Value::Bool(true));
            if let Some(x) = script.placement.x {
                obj.insert("x".into(), json!(x));
            }
            if let Some(y) = script.placement.y {
                obj.insert("y".into(), json!(y));
            }
        }
    }

    /// Write a sequence; returns the id of its first block.
    fn seq(&mut self, seq: &BlockSeq, parent: Option<&str>) -> Option<String> {
        let ids: Vec<String> = seq.blocks.iter().map(id_of).collect();
        for (i, block) in seq.blocks.iter().enumerate() {
            let parent = if i == 0 {
                parent.map(str::to_string)
            } else {
                Some(ids[i - 1].clone())
            };
            self.block(block, parent.as_deref(), ids.get(i + 1).cloned());
        }
        ids.into_iter().next()
    }

    fn block(&mut self, block: &BlockNode, parent: Option<&str>, next: Option<String>) -> String {
        let id = id_of(block);
        let mut inputs = Map::new();
        for slot in &block.inputs {
            let value = self.input_value(&slot.value, &id);
            let encoded = match slot.obscured.as_deref() {
                Some(obscured) => {
                    let shadow = self.input_value(obscured, &id);
                    json!([3, value, shadow])
                }
                None if is_shadow_like(&slot.value) => json!([1, value]),
                None => json!([2, value]),
            };
            inputs.insert(slot.name.clone(), encoded);
        }
        for (i, seq) in block.substacks.iter().enumerate() {
            if let Some(first) = self.seq(seq, Some(&id)) {
                let name = if i == 0 {
                    "SUBSTACK".to_string()
                } else {
                    format!("SUBSTACK{}", i + 1)
                };
                inputs.insert(name, json!([2, first]));
            }
        }
        let fields: Map<String, Value> = block
            .fields
            .iter()
            .map(|f| {
                let id = f.id.clone().or_else(|| self.entity_id_for_field(&f.name, &f.value));
                (f.name.clone(), json!([f.value, id]))
            })
            .collect();

        let mut obj = Map::new();
        obj.insert("opcode".into(), Value::String(block.opcode.clone()));
        obj.insert("next".into(), next.map_or(Value::Null, Value::String));
        obj.insert(
            "parent".into(),
            parent.map_or(Value::Null, |p| Value::String(p.to_string())),
        );
        obj.insert("inputs".into(), Value::Object(inputs));
        obj.insert("fields".into(), Value::Object(fields));
        obj.insert("shadow".into(), Value::Bool(block.shadow));
        obj.insert("topLevel".into(), Value::Bool(false));
        if let Some(m) = &block.mutation {
            obj.insert("mutation".into(), Value::Object(m.clone()));
        }
        if let Some(c) = &block.meta.comment {
            obj.insert("comment".into(), Value::String(c.clone()));
        }
        self.table.insert(id.clone(), Value::Object(obj));
        id
    }

    fn input_value(&mut self, value: &InputValue, owner: &str) -> Value {
        match value {
            InputValue::Literal(lit) => json!([lit.kind.code(), lit.value]),
            InputValue::Expression(block) => Value::String(self.block(block, Some(owner), None)),
            InputValue::Variable(r) => json!([12, r.name, self.resolve(r, "VARIABLE")]),
            InputValue::List(r) => json!([13, r.name, self.resolve(r, "LIST")]),
            InputValue::Broadcast(r) => json!([11, r.name, self.broadcast_id(r)]),
            InputValue::Empty => Value::Null,
        }
    }

    fn broadcast_id(&self, r: &EntityRef) -> String {
        r.id.clone()
            .or_else(|| {
                self.broadcasts
                    .iter()
                    .find(|(_, name)| **name == r.name)
                    .map(|(id, _)| id.clone())
            })
            .unwrap_or_else(|| r.name.clone())
    }

    fn resolve(&self, r: &EntityRef, field: &str) -> String {
        r.id.clone()
            .or_else(|| self.entity_id_for_field(field, &r.name))
            .unwrap_or_else(|| r.name.clone())
    }

    /// Id of the variable or list a name-only reference points at, looking
    /// in the owning target first and then the stage.
    fn entity_id_for_field(&self, field: &str, name: &str) -> Option<String> {
        let find = |t: &Target| match field {
            "VARIABLE" => t.variable_by_name(name).map(|(id, _)| id.clone()),
            "LIST" => t.list_by_name(name).map(|(id, _)| id.clone()),
            _ => None,
        };
        if field == "BROADCAST_OPTION" {
            return self
                .broadcasts
                .iter()
                .find(|(_, n)| n.as_str() == name)
                .map(|(id, _)| id.clone());
        }
        find(self.target).or_else(|| find(self.stage))
    }
}

fn is_shadow_like(value: &InputValue) -> bool {
    match value {
        InputValue::Literal(_) | InputValue::Broadcast(_) | InputValue::Empty => true,
        InputValue::Expression(b) => b.shadow,
        InputValue::Variable(_) | InputValue::List(_) => false,
    }
}
