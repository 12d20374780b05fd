//! The extraction JSON schema, the response parser, and label/type normalization.
//!
//! A backend is asked to emit one JSON object of the form
//!
//! ```json
//! {
//!   "elements": [{"type": "task", "name": "Check order", "bbox": [x, y, w, h], "id": "t1"}],
//!   "flows":    [{"source": "t1", "target": "g1", "type": "sequenceflow", "label": "yes"}],
//!   "pools":    [{"name": "Customer", "lanes": ["Sales"]}]
//! }
//! ```
//!
//! `bbox` may also be given as `{"x":..,"y":..,"width":..,"height":..}`. Unknown keys are ignored.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use unicode_normalization::UnicodeNormalization;

/// Axis-aligned pixel rectangle: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    /// Returns `None` unless the rectangle is finite with a non-negative origin and positive extent.
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Option<Self> {
        let finite = [x, y, width, height].iter().all(|v| v.is_finite());
        if finite && x >= 0.0 && y >= 0.0 && width > 0.0 && height > 0.0 {
            Some(BBox { x, y, width, height })
        } else {
            None
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    /// Grows the box by `margin * width` on the left and right and `margin * height` on top and bottom.
    pub fn expanded(&self, margin: f64) -> BBox {
        let dx = self.width * margin;
        let dy = self.height * margin;
        BBox { x: self.x - dx, y: self.y - dy, width: self.width + 2.0 * dx, height: self.height + 2.0 * dy }
    }

    pub fn contains_point(&self, (px, py): (f64, f64)) -> bool {
        px >= self.x && px <= self.x + self.width && py >= self.y && py <= self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedElement {
    #[serde(rename = "type")]
    pub element_type: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(rename = "id", default, skip_serializing_if = "Option::is_none")]
    pub local_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFlow {
    pub source: String,
    pub target: String,
    #[serde(rename = "type")]
    pub flow_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPool {
    pub name: String,
    #[serde(default)]
    pub lanes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractedDiagram {
    pub elements: Vec<ExtractedElement>,
    pub flows: Vec<ExtractedFlow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools: Option<Vec<ExtractedPool>>,
}

impl ExtractedDiagram {
    /// Resolves a flow endpoint to an element name when it names a model-assigned id,
    /// otherwise returns the endpoint text unchanged.
    pub fn resolve_endpoint<'a>(&'a self, endpoint: &'a str) -> &'a str {
        self.elements.iter().find(|e| e.local_id.as_deref() == Some(endpoint)).map(|e| e.name.as_str()).unwrap_or(endpoint)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagram serialization is infallible")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Parsed,
    Unparseable,
}

/// Result of parsing one backend response. `raw_text` always holds the untouched input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagram: Option<ExtractedDiagram>,
    pub raw_text: String,
}

impl ParseOutcome {
    pub fn parsed(diagram: ExtractedDiagram, raw_text: impl Into<String>) -> Self {
        ParseOutcome { status: ParseStatus::Parsed, diagram: Some(diagram), raw_text: raw_text.into() }
    }

    pub fn unparseable(raw_text: impl Into<String>) -> Self {
        ParseOutcome { status: ParseStatus::Unparseable, diagram: None, raw_text: raw_text.into() }
    }

    pub fn is_parsed(&self) -> bool {
        self.status == ParseStatus::Parsed
    }

    /// The diagram to score: unparseable responses count as an empty prediction.
    pub fn diagram_or_empty(&self) -> ExtractedDiagram {
        self.diagram.clone().unwrap_or_default()
    }
}

/// Parses a raw model response into a diagram.
///
/// Tries fenced code blocks first, then every balanced `{...}` span in order of its opening
/// brace. Each candidate is tried verbatim and then once with trailing commas removed. The
/// first candidate that is a JSON object carrying an `elements` or `flows` array wins.
pub fn parse_response(raw: &str) -> ParseOutcome {
    let mut candidates: Vec<&str> = fenced_blocks(raw);
    candidates.extend(balanced_objects(raw));
    for candidate in candidates {
        if let Some(diagram) = try_candidate(candidate) {
            return ParseOutcome::parsed(diagram, raw);
        }
    }
    ParseOutcome::unparseable(raw)
}

fn try_candidate(text: &str) -> Option<ExtractedDiagram> {
    let text = text.trim();
    if !text.starts_with('{') {
        return None;
    }
    let value =
        serde_json::from_str::<Value>(text).ok().or_else(|| serde_json::from_str::<Value>(&strip_trailing_commas(text)).ok())?;
    diagram_from_value(&value)
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // Skip the info string ("json", "JSON", ...) up to the end of the line.
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

/// Every balanced `{...}` span of `raw`, string-literal aware, in order of the opening brace.
fn balanced_objects(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' {
            continue;
        }
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (offset, &c) in bytes[start..].iter().enumerate() {
            if in_string {
                match c {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match c {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        out.push(&raw[start..start + offset + 1]);
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Removes commas that directly precede a closing `}` or `]` (ignoring whitespace), outside strings.
fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn diagram_from_value(value: &Value) -> Option<ExtractedDiagram> {
    let obj = value.as_object()?;
    let elements = obj.get("elements").and_then(Value::as_array);
    let flows = obj.get("flows").and_then(Value::as_array);
    if elements.is_none() && flows.is_none() {
        return None;
    }
    let elements =
        elements.map(|arr| arr.iter().filter_map(Value::as_object).map(element_from_map).collect()).unwrap_or_default();
    let flows = flows.map(|arr| arr.iter().filter_map(Value::as_object).filter_map(flow_from_map).collect()).unwrap_or_default();
    let pools = obj.get("pools").and_then(Value::as_array).map(|arr| {
        arr.iter()
            .filter_map(|p| match p {
                Value::String(name) => Some(ExtractedPool { name: name.clone(), lanes: Vec::new() }),
                Value::Object(m) => Some(ExtractedPool {
                    name: text_field(m, "name"),
                    lanes: m
                        .get("lanes")
                        .and_then(Value::as_array)
                        .map(|ls| ls.iter().map(scalar_text).filter(|s| !s.is_empty()).collect())
                        .unwrap_or_default(),
                }),
                _ => None,
            })
            .collect()
    });
    Some(ExtractedDiagram { elements, flows, pools })
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        _ => String::new(),
    }
}

fn text_field(m: &Map<String, Value>, key: &str) -> String {
    m.get(key).map(scalar_text).unwrap_or_default()
}

fn element_from_map(m: &Map<String, Value>) -> ExtractedElement {
    let local_id = Some(text_field(m, "id")).filter(|s| !s.trim().is_empty());
    ExtractedElement {
        element_type: canonical_type(&text_field(m, "type")),
        name: text_field(m, "name"),
        bbox: m.get("bbox").and_then(bbox_from_value),
        local_id,
    }
}

fn flow_from_map(m: &Map<String, Value>) -> Option<ExtractedFlow> {
    let source = text_field(m, "source");
    let target = text_field(m, "target");
    if normalize_label(&source).is_empty() || normalize_label(&target).is_empty() {
        return None;
    }
    let label = Some(text_field(m, "label")).filter(|s| !s.is_empty());
    Some(ExtractedFlow { source, target, flow_type: canonical_type(&text_field(m, "type")), label })
}

fn bbox_from_value(v: &Value) -> Option<BBox> {
    let num = |v: Option<&Value>| v.and_then(Value::as_f64);
    match v {
        Value::Array(a) if a.len() == 4 => BBox::new(num(a.first())?, num(a.get(1))?, num(a.get(2))?, num(a.get(3))?),
        Value::Object(m) => {
            let w = num(m.get("width")).or_else(|| num(m.get("w")))?;
            let h = num(m.get("height")).or_else(|| num(m.get("h")))?;
            BBox::new(num(m.get("x"))?, num(m.get("y"))?, w, h)
        }
        _ => None,
    }
}

/// Canonical comparison form of a label: NFC, trimmed, inner whitespace collapsed, lowercased.
pub fn normalize_label(raw: &str) -> String {
    if raw.is_ascii() {
        // NFC is the identity on ASCII.
        let mut out = String::with_capacity(raw.len());
        for word in raw.split(char::is_whitespace).filter(|w| !w.is_empty()) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.extend(word.chars().map(|c| c.to_ascii_lowercase()));
        }
        return out;
    }
    let nfc: String = raw.nfc().collect();
    let collapsed = nfc.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.to_lowercase()
}

/// Lowercased type label with whitespace, underscores and hyphens removed.
pub fn canonical_type(raw: &str) -> String {
    if raw.is_ascii() {
        return raw.chars().filter(|c| !c.is_whitespace() && *c != '_' && *c != '-').map(|c| c.to_ascii_lowercase()).collect();
    }
    raw.nfc().filter(|c| !c.is_whitespace() && *c != '_' && *c != '-').collect::<String>().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    Strict,
    Relaxed,
}

impl fmt::Display for Strictness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strictness::Strict => "strict",
            Strictness::Relaxed => "relaxed",
        })
    }
}

impl std::str::FromStr for Strictness {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(Strictness::Strict),
            "relaxed" => Ok(Strictness::Relaxed),
            other => Err(format!("unknown strictness '{other}'")),
        }
    }
}

/// Coarse type families used by relaxed matching.
pub const TYPE_FAMILIES: [&str; 7] = ["event", "gateway", "activity", "flow", "container", "data", "other"];

/// Maps canonical type labels onto the seven coarse families. Unknown labels fall to `other`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeNormalizationTable {
    mapping: BTreeMap<String, &'static str>,
}

impl Default for TypeNormalizationTable {
    fn default() -> Self {
        const GROUPS: [(&str, &[&str]); 6] = [
            (
                "event",
                &[
                    "startevent",
                    "endevent",
                    "intermediateevent",
                    "intermediatecatchevent",
                    "intermediatethrowevent",
                    "boundaryevent",
                    "event",
                ],
            ),
            (
                "gateway",
                &["exclusivegateway", "parallelgateway", "inclusivegateway", "eventbasedgateway", "complexgateway", "gateway"],
            ),
            (
                "activity",
                &[
                    "task",
                    "usertask",
                    "servicetask",
                    "scripttask",
                    "manualtask",
                    "sendtask",
                    "receivetask",
                    "businessruletask",
                    "callactivity",
                    "subprocess",
                    "activity",
                ],
            ),
            ("flow", &["sequenceflow", "messageflow", "association", "flow"]),
            ("container", &["pool", "lane", "participant", "container"]),
            ("data", &["datastore", "dataobject", "dataobjectreference", "datastorereference", "data"]),
        ];
        let mapping = GROUPS.iter().flat_map(|(family, members)| members.iter().map(move |m| (m.to_string(), *family))).collect();
        TypeNormalizationTable { mapping }
    }
}

impl TypeNormalizationTable {
    /// Adds or replaces entries. Fails on a family outside [`TYPE_FAMILIES`].
    pub fn with_overrides<'a>(mut self, overrides: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, String> {
        for (ty, family) in overrides {
            let family = TYPE_FAMILIES
                .iter()
                .find(|f| **f == family.trim().to_lowercase())
                .ok_or_else(|| format!("unknown type family '{family}' for '{ty}'"))?;
            self.mapping.insert(canonical_type(ty), family);
        }
        Ok(self)
    }

    pub fn family(&self, canonical: &str) -> &'static str {
        self.mapping.get(canonical).copied().unwrap_or("other")
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.mapping.contains_key(canonical)
    }
}

/// Strict: the canonical type label. Relaxed: its coarse family.
pub fn normalize_type(raw_type: &str, table: &TypeNormalizationTable, strictness: Strictness) -> String {
    let canonical = canonical_type(raw_type);
    match strictness {
        Strictness::Strict => canonical,
        Strictness::Relaxed => table.family(&canonical).to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_empty_diagram() {
        let out = parse_response("```json\n{\"elements\":[],\"flows\":[]}\n```");
        assert!(out.is_parsed());
        let d = out.diagram.unwrap();
        assert!(d.elements.is_empty() && d.flows.is_empty());
    }

    #[test]
    fn prose_wrapped_object() {
        let raw = "Sure! Here is the JSON: {\"elements\":[{\"type\":\"task\",\"name\":\"A\"}],\"flows\":[]} Hope this helps.";
        let out = parse_response(raw);
        let d = out.diagram.unwrap();
        assert_eq!(d.elements.len(), 1);
        assert_eq!(d.elements[0].element_type, "task");
        assert_eq!(d.elements[0].name, "A");
        assert_eq!(out.raw_text, raw);
    }

    #[test]
    fn prose_only_is_unparseable() {
        let raw = "The diagram shows a process with three tasks.";
        let out = parse_response(raw);
        assert_eq!(out.status, ParseStatus::Unparseable);
        assert!(out.diagram.is_none());
        assert_eq!(out.raw_text, raw);
    }

    #[test]
    fn trailing_commas_are_repaired() {
        let raw = "{\"elements\":[{\"type\":\"Start Event\",\"name\":\"go\",},],\"flows\":[],}";
        let d = parse_response(raw).diagram.unwrap();
        assert_eq!(d.elements[0].element_type, "startevent");
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_the_scan() {
        let raw = "note {oops} then {\"elements\":[{\"type\":\"task\",\"name\":\"a } b\"}],\"flows\":[]}";
        let d = parse_response(raw).diagram.unwrap();
        assert_eq!(d.elements[0].name, "a } b");
    }

    #[test]
    fn object_without_schema_keys_is_skipped() {
        let raw = "{\"note\": 1} and {\"flows\":[{\"source\":\"A\",\"target\":\"B\",\"type\":\"sequenceFlow\"}]}";
        let d = parse_response(raw).diagram.unwrap();
        assert_eq!(d.flows.len(), 1);
        assert_eq!(d.flows[0].flow_type, "sequenceflow");
    }

    #[test]
    fn bbox_forms_and_invalid_boxes() {
        let raw = r#"{"elements":[
            {"type":"task","name":"a","bbox":[1,2,3,4]},
            {"type":"task","name":"b","bbox":{"x":1,"y":2,"width":3,"height":4}},
            {"type":"task","name":"c","bbox":[1,2,0,4]}],"flows":[]}"#;
        let d = parse_response(raw).diagram.unwrap();
        assert_eq!(d.elements[0].bbox, BBox::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(d.elements[0].bbox, d.elements[1].bbox);
        assert_eq!(d.elements[2].bbox, None);
    }

    #[test]
    fn flows_without_endpoints_are_dropped() {
        let raw = r#"{"elements":[],"flows":[{"source":"  ","target":"B","type":"sequenceflow"}]}"#;
        assert!(parse_response(raw).diagram.unwrap().flows.is_empty());
    }

    #[test]
    fn endpoints_resolve_through_local_ids() {
        let raw = r#"{"elements":[{"type":"task","name":"Ship","id":"t1"}],
                      "flows":[{"source":"t1","target":"Bill","type":"sequenceflow"}]}"#;
        let d = parse_response(raw).diagram.unwrap();
        assert_eq!(d.resolve_endpoint(&d.flows[0].source), "Ship");
        assert_eq!(d.resolve_endpoint(&d.flows[0].target), "Bill");
    }

    #[test]
    fn label_normalization_examples() {
        assert_eq!(normalize_label("  Check\n Order "), "check order");
        assert_eq!(normalize_label(""), "");
        // Decomposed "e + U+0301" composes to U+00E9 under NFC.
        assert_eq!(normalize_label("Re\u{301}sume\u{301}  review"), "r\u{e9}sum\u{e9} review");
        assert_eq!(normalize_label("R\u{e9}sum\u{e9}  review"), "r\u{e9}sum\u{e9} review");
    }

    #[test]
    fn type_normalization_examples() {
        let table = TypeNormalizationTable::default();
        for raw in ["Exclusive Gateway", "exclusive_gateway", "exclusiveGateway"] {
            assert_eq!(normalize_type(raw, &table, Strictness::Strict), "exclusivegateway");
        }
        assert_eq!(normalize_type("exclusivegateway", &table, Strictness::Relaxed), "gateway");
        assert_eq!(normalize_type("startevent", &table, Strictness::Relaxed), "event");
        assert_eq!(normalize_type("flow", &table, Strictness::Relaxed), "flow");
        assert_eq!(normalize_type("textannotation", &table, Strictness::Relaxed), "other");
    }

    #[test]
    fn overrides_reject_unknown_families() {
        let table = TypeNormalizationTable::default();
        assert!(table.clone().with_overrides([("textAnnotation", "bogus")]).is_err());
        let t = table.with_overrides([("textAnnotation", "data")]).unwrap();
        assert_eq!(t.family("textannotation"), "data");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn diagram() -> impl Strategy<Value = ExtractedDiagram> {
            let element = (
                "[a-z]{1,8}",
                "[A-Za-z ]{0,10}",
                proptest::option::of((0u16..500, 0u16..500, 1u16..200, 1u16..200)),
                proptest::option::of("[a-z][0-9]{1,2}"),
            )
                .prop_map(|(t, n, b, id)| ExtractedElement {
                    element_type: t,
                    name: n,
                    bbox: b.and_then(|(x, y, w, h)| BBox::new(x as f64, y as f64, w as f64, h as f64)),
                    local_id: id,
                });
            let flow = ("[A-Za-z]{1,6}", "[A-Za-z]{1,6}", "[a-z]{0,6}", proptest::option::of("[a-z]{1,4}"))
                .prop_map(|(s, t, ty, l)| ExtractedFlow { source: s, target: t, flow_type: ty, label: l });
            let pool = ("[A-Za-z]{0,6}", proptest::collection::vec("[A-Za-z]{1,6}", 0..3))
                .prop_map(|(name, lanes)| ExtractedPool { name, lanes });
            (
                proptest::collection::vec(element, 0..6),
                proptest::collection::vec(flow, 0..6),
                proptest::option::of(proptest::collection::vec(pool, 0..3)),
            )
                .prop_map(|(elements, flows, pools)| ExtractedDiagram { elements, flows, pools })
        }

        proptest! {
            #[test]
            fn ascii_fast_path_agrees(raw in "[ -~\t\n\r\x0b\x0c]{0,30}") {
                let slow: String = raw.nfc().collect::<String>().split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
                prop_assert_eq!(normalize_label(&raw), slow);
                let slow: String = raw.nfc().filter(|c| !c.is_whitespace() && *c != '_' && *c != '-').collect::<String>().to_lowercase();
                prop_assert_eq!(canonical_type(&raw), slow);
            }
        }

        proptest! {
            #[test]
            fn parse_is_total_and_keeps_raw(raw in ".{0,200}") {
                let out = parse_response(&raw);
                prop_assert_eq!(&out.raw_text, &raw);
                prop_assert_eq!(out.diagram.is_some(), out.is_parsed());
            }

            #[test]
            fn normalize_label_is_idempotent(raw in "\\PC{0,40}") {
                let once = normalize_label(&raw);
                prop_assert_eq!(normalize_label(&once), once);
            }

            #[test]
            fn relaxed_is_a_function_of_strict(a in "[A-Za-z _-]{0,20}", b in "[A-Za-z _-]{0,20}") {
                let table = TypeNormalizationTable::default();
                if normalize_type(&a, &table, Strictness::Strict) == normalize_type(&b, &table, Strictness::Strict) {
                    prop_assert_eq!(
                        normalize_type(&a, &table, Strictness::Relaxed),
                        normalize_type(&b, &table, Strictness::Relaxed)
                    );
                }
            }

            #[test]
            fn parsed_diagrams_reserialize_identically(d in diagram()) {
                let first = parse_response(&d.to_json()).diagram.unwrap();
                let second = parse_response(&first.to_json()).diagram.unwrap();
                prop_assert_eq!(first, second);
            }
        }
    }
}
