//! The seven design tools the agent may call, their schemas and dispatch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::design::Design;
use crate::kb::{Embedder, KnowledgeBase, DEFAULT_K};
use crate::rtl::hierarchy_tree;
use crate::rtl::params::resolve_module_parameters;
use crate::structure::ConeDirection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolCategory {
    Retrieval,
    Structural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ArgType {
    String,
    Integer,
    Object,
}

struct ArgSpec {
    name: &'static str,
    ty: ArgType,
    required: bool,
    description: &'static str,
    choices: &'static [&'static str],
    range: Option<(i64, i64)>,
}

const fn arg(name: &'static str, ty: ArgType, required: bool, description: &'static str) -> ArgSpec {
    ArgSpec { name, ty, required, description, choices: &[], range: None }
}

struct ToolDef {
    name: &'static str,
    category: ToolCategory,
    description: &'static str,
    args: &'static [ArgSpec],
}

const TOOLS: &[ToolDef] = &[
    ToolDef {
        name: "search_design",
        category: ToolCategory::Retrieval,
        description: "Semantic search over the design's chunks (module interfaces, always blocks, instances, assign groups). Returns the k best matches with cosine scores.",
        args: &[
            arg("query", ArgType::String, true, "Natural-language or code query."),
            ArgSpec { name: "k", ty: ArgType::Integer, required: false, description: "Number of results (default 5).", choices: &[], range: Some((1, 50)) },
        ],
    },
    ToolDef {
        name: "get_module_interface",
        category: ToolCategory::Retrieval,
        description: "Ports and parameters of a module.",
        args: &[arg("module", ArgType::String, true, "Module name.")],
    },
    ToolDef {
        name: "get_hierarchy",
        category: ToolCategory::Retrieval,
        description: "Instance tree below the top module.",
        args: &[],
    },
    ToolDef {
        name: "resolve_parameter",
        category: ToolCategory::Retrieval,
        description: "Resolved integer value of a parameter. `module` may be a module name (defaults) or an instance path (as elaborated).",
        args: &[
            arg("module", ArgType::String, true, "Module name or instance path."),
            arg("parameter", ArgType::String, true, "Parameter or localparam name."),
            arg("overrides", ArgType::Object, false, "Parameter overrides applied to a module name, name to integer."),
        ],
    },
    ToolDef {
        name: "get_always_blocks_for_signal",
        category: ToolCategory::Retrieval,
        description: "Every always block that reads or writes the signal.",
        args: &[arg("signal", ArgType::String, true, "Signal name.")],
    },
    ToolDef {
        name: "get_signal_cone",
        category: ToolCategory::Structural,
        description: "Transitive fan-in or fan-out of a signal in the elaborated design (hierarchical paths).",
        args: &[
            arg("signal", ArgType::String, true, "Hierarchical signal path, e.g. `state` or `u1.q`."),
            ArgSpec { name: "direction", ty: ArgType::String, required: true, description: "fanin or fanout.", choices: &["fanin", "fanout"], range: None },
            ArgSpec { name: "depth", ty: ArgType::Integer, required: false, description: "Maximum number of edges to follow.", choices: &[], range: Some((1, 1000)) },
        ],
    },
    ToolDef {
        name: "get_flop_info",
        category: ToolCategory::Structural,
        description: "Clock, reset (signal, polarity, sync/async, value) and data input of a register.",
        args: &[arg("reg", ArgType::String, true, "Hierarchical register path.")],
    },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

pub fn tool_names() -> Vec<&'static str> {
    TOOLS.iter().map(|t| t.name).collect()
}

pub fn tool_category(name: &str) -> Option<ToolCategory> {
    TOOLS.iter().find(|t| t.name == name).map(|t| t.category)
}

fn schema_of(t: &ToolDef) -> ToolSchema {
    let mut props = Map::new();
    for a in t.args {
        let mut p = json!({
            "type": match a.ty { ArgType::String => "string", ArgType::Integer => "integer", ArgType::Object => "object" },
            "description": a.description,
        });
        if !a.choices.is_empty() {
            p["enum"] = json!(a.choices);
        }
        if let Some((lo, hi)) = a.range {
            p["minimum"] = json!(lo);
            p["maximum"] = json!(hi);
        }
        props.insert(a.name.to_string(), p);
    }
    let required: Vec<&str> = t.args.iter().filter(|a| a.required).map(|a| a.name).collect();
    ToolSchema {
        name: t.name.to_string(),
        description: t.description.to_string(),
        parameters: json!({"type": "object", "properties": props, "required": required, "additionalProperties": false}),
    }
}

/// Schemas of the tools in the given categories, in registry order.
pub fn schemas(categories: &[ToolCategory]) -> Vec<ToolSchema> {
    TOOLS.iter().filter(|t| categories.contains(&t.category)).map(schema_of).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsStatus {
    Ok,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub call_id: String,
    pub status: ObsStatus,
    pub payload: Value,
}

impl Observation {
    fn ok(call_id: &str, payload: Value) -> Self {
        Observation { call_id: call_id.to_string(), status: ObsStatus::Ok, payload }
    }

    pub fn error(call_id: &str, code: &str, message: impl Into<String>) -> Self {
        Observation { call_id: call_id.to_string(), status: ObsStatus::Error, payload: json!({"code": code, "message": message.into()}) }
    }

    /// Text fed back to the model.
    pub fn render(&self) -> String {
        let mut v = Map::new();
        v.insert("status".into(), serde_json::to_value(self.status).expect("serializable"));
        match &self.payload {
            Value::Object(m) => v.extend(m.clone()),
            other => {
                v.insert("result".into(), other.clone());
            }
        }
        Value::Object(v).to_string()
    }

    pub fn error_code(&self) -> Option<&str> {
        (self.status == ObsStatus::Error).then(|| self.payload.get("code").and_then(Value::as_str)).flatten()
    }
}

/// Read-only context the tools operate on.
pub struct ToolContext<'a> {
    pub design: &'a Design,
    pub kb: &'a KnowledgeBase,
    pub embedder: &'a dyn Embedder,
}

fn validate(def: &ToolDef, args: &Value) -> Result<(), String> {
    let obj = args.as_object().ok_or_else(|| "arguments must be a JSON object".to_string())?;
    for k in obj.keys() {
        if !def.args.iter().any(|a| a.name == k) {
            return Err(format!("unexpected argument '{k}'"));
        }
    }
    for a in def.args {
        let Some(v) = obj.get(a.name) else {
            if a.required {
                return Err(format!("missing required argument '{}'", a.name));
            }
            continue;
        };
        let ok = match a.ty {
            ArgType::String => v.is_string(),
            ArgType::Integer => v.is_i64(),
            ArgType::Object => v.is_object(),
        };
        if !ok {
            return Err(format!("argument '{}' must be of type {:?}", a.name, a.ty).to_lowercase());
        }
        if !a.choices.is_empty() && !a.choices.contains(&v.as_str().unwrap_or_default()) {
            return Err(format!("argument '{}' must be one of {:?}", a.name, a.choices));
        }
        if let (Some((lo, hi)), Some(n)) = (a.range, v.as_i64()) {
            if n < lo || n > hi {
                return Err(format!("argument '{}' must be between {lo} and {hi}", a.name));
            }
        }
    }
    Ok(())
}

fn s<'v>(args: &'v Value, k: &str) -> &'v str {
    args.get(k).and_then(Value::as_str).unwrap_or_default()
}

/// Validates and runs one tool call. Failures become error observations.
pub fn dispatch_tool(name: &str, call_id: &str, args: &Value, ctx: &ToolContext<'_>) -> Observation {
    let Some(def) = TOOLS.iter().find(|t| t.name == name) else {
        return Observation::error(call_id, "unknown_tool", format!("no tool named '{name}'; available: {}", tool_names().join(", ")));
    };
    if let Err(m) = validate(def, args) {
        return Observation::error(call_id, "invalid_arguments", m);
    }
    match run(name, args, ctx) {
        Ok(v) => Observation::ok(call_id, v),
        Err((code, msg)) => Observation::error(call_id, code, msg),
    }
}

type ToolResult = Result<Value, (&'static str, String)>;

fn run(name: &str, args: &Value, ctx: &ToolContext<'_>) -> ToolResult {
    let d = ctx.design;
    match name {
        "search_design" => {
            let k = args.get("k").and_then(Value::as_u64).map_or(DEFAULT_K, |k| k as usize);
            let hits = ctx.kb.semantic_search(ctx.embedder, s(args, "query"), k).map_err(|e| (e.code(), e.to_string()))?;
            let results: Vec<Value> = hits
                .iter()
                .map(|h| {
                    let c = ctx.kb.chunk(&h.chunk_id).expect("hit comes from the index");
                    json!({"chunk_id": h.chunk_id, "kind": c.kind.label(), "module": c.owner_module, "score": (h.score * 1e6).round() / 1e6, "text": c.body()})
                })
                .collect();
            Ok(json!({ "results": results }))
        }
        "get_module_interface" => {
            let module = s(args, "module");
            let chunk = ctx.kb.interface_query(module).map_err(|e| (e.code(), e.to_string()))?;
            let m = d.unit.module(module).ok_or(("unknown_module", format!("unknown module '{module}'")))?;
            let values = resolve_module_parameters(m, &BTreeMap::new()).unwrap_or_default();
            let ports: Vec<Value> = m
                .ports
                .iter()
                .map(|p| {
                    let range = p.range.as_ref().map(|r| format!("[{}:{}]", r.msb, r.lsb));
                    json!({"name": p.name, "direction": p.direction, "range": range})
                })
                .collect();
            let params: Vec<Value> = m.params.iter().map(|p| json!({"name": p.name, "kind": p.kind, "default": p.value.to_string(), "value": values.get(&p.name)})).collect();
            Ok(json!({"module": module, "chunk_id": chunk.chunk_id, "ports": ports, "parameters": params, "text": chunk.body()}))
        }
        "get_hierarchy" => {
            let tree = hierarchy_tree(&d.unit, &d.top).map_err(|e| ("hierarchy_error", e.to_string()))?;
            let instances: Vec<Value> = tree.flatten().into_iter().map(|(m, p)| json!({"path": p, "module": m})).collect();
            Ok(json!({"top": d.top, "tree": tree.summary(), "instances": instances}))
        }
        "resolve_parameter" => {
            let (module, param) = (s(args, "module"), s(args, "parameter"));
            let overrides: BTreeMap<String, i64> = match args.get("overrides") {
                Some(o) => serde_json::from_value(o.clone()).map_err(|_| ("invalid_arguments", "overrides must map names to integers".to_string()))?,
                None => BTreeMap::new(),
            };
            let (resolved, owner) = match d.flat.instances.get(module) {
                Some(inst) if overrides.is_empty() && !module.is_empty() => (inst.params.clone(), inst.module.clone()),
                _ => {
                    let m = d.unit.module(module).ok_or(("unknown_module", format!("unknown module or instance '{module}'")))?;
                    (resolve_module_parameters(m, &overrides).map_err(|e| ("parameter_error", e.to_string()))?, m.name.clone())
                }
            };
            let v = resolved.get(param).ok_or(("unknown_parameter", format!("'{owner}' has no parameter '{param}'")))?;
            Ok(json!({"module": owner, "parameter": param, "value": v}))
        }
        "get_always_blocks_for_signal" => {
            let signal = s(args, "signal");
            let blocks = ctx.kb.signal_blocks_query(signal).map_err(|e| (e.code(), e.to_string()))?;
            let blocks: Vec<Value> = blocks.iter().map(|c| json!({"chunk_id": c.chunk_id, "module": c.owner_module, "text": c.body()})).collect();
            Ok(json!({"signal": signal, "blocks": blocks}))
        }
        "get_signal_cone" => {
            let signal = s(args, "signal");
            let dir: ConeDirection = s(args, "direction").parse().map_err(|e| ("invalid_arguments", e))?;
            let depth = args.get("depth").and_then(Value::as_u64).map(|x| x as usize);
            let cone = d.graph.cone(signal, dir, depth).map_err(|e| ("unknown_signal", e.to_string()))?;
            Ok(json!({"signal": signal, "direction": dir, "depth": depth, "cone": cone}))
        }
        "get_flop_info" => {
            use crate::structure::StructureError as E;
            let reg = s(args, "reg");
            let info = d.graph.flop_properties(reg).map_err(|e| {
                let code = match e {
                    E::UnknownSignal(_) => "unknown_signal",
                    E::NotAFlop(_) => "not_a_flop",
                    E::MultiDriver(_) => "multi_driver",
                };
                (code, e.to_string())
            })?;
            let mut v = serde_json::to_value(info).expect("serializable");
            v["reg"] = json!(reg);
            Ok(v)
        }
        _ => unreachable!("validated tool name"),
    }
}
