//! Gold-standard element and relation tables parsed from BPMN 2.0 XML.

use std::collections::{HashMap, HashSet};

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Namespace prefix of the BPMN 2.0 semantic model. Vendor suffixes are tolerated.
pub const BPMN_MODEL_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";

pub const ELEMENTS_HEADER: [&str; 3] = ["id", "name", "type"];
pub const RELATIONS_HEADER: [&str; 6] = ["source_id", "source_name", "target_id", "target_name", "type", "label"];

/// Node tags (local names) that become gold elements. `participant` is emitted as `pool`.
const NODE_TAGS: &[&str] = &[
    "startEvent",
    "endEvent",
    "intermediateCatchEvent",
    "intermediateThrowEvent",
    "boundaryEvent",
    "implicitThrowEvent",
    "task",
    "userTask",
    "serviceTask",
    "scriptTask",
    "manualTask",
    "sendTask",
    "receiveTask",
    "businessRuleTask",
    "callActivity",
    "subProcess",
    "adHocSubProcess",
    "transaction",
    "exclusiveGateway",
    "parallelGateway",
    "inclusiveGateway",
    "eventBasedGateway",
    "complexGateway",
    "dataStore",
    "dataStoreReference",
    "dataObjectReference",
    "textAnnotation",
    "group",
    "participant",
    "lane",
];

/// Arc tags that become both a relation and an element.
const FLOW_TAGS: &[&str] = &["sequenceFlow", "messageFlow", "association"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldElement {
    pub id: String,
    pub name: String,
    pub element_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub source_id: String,
    pub target_id: String,
    pub source_name: String,
    pub target_name: String,
    pub relation_type: String,
    /// Flow label; empty when the arc has no `name`.
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub diagram_id: String,
    pub elements: Vec<GoldElement>,
    pub relations: Vec<GoldRelation>,
}

#[derive(Debug, Error)]
pub enum GoldError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("not a BPMN 2.0 document: {0}")]
    NotBpmn(String),
    #[error("{flow} references unknown element id '{id}'")]
    DanglingReference { flow: String, id: String },
    #[error("duplicate element id '{0}'")]
    DuplicateId(String),
    #[error("bad CSV header in {table}: expected '{expected}', found '{found}'")]
    BadHeader { table: &'static str, expected: String, found: String },
    #[error("bad CSV row {line} in {table}: {reason}")]
    BadRow { table: &'static str, line: u64, reason: String },
}

fn is_bpmn(node: &Node<'_, '_>) -> bool {
    node.tag_name().namespace().is_some_and(|ns| ns.starts_with(BPMN_MODEL_NS))
}

/// Parses BPMN 2.0 XML into gold tables. Elements and relations keep document order.
pub fn parse_bpmn_xml(xml_bytes: &[u8], diagram_id: &str) -> Result<GoldStandard, GoldError> {
    let text = std::str::from_utf8(xml_bytes).map_err(|e| GoldError::MalformedXml(e.to_string()))?;
    let doc = Document::parse(text).map_err(|e| GoldError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if !(is_bpmn(&root) && root.tag_name().name() == "definitions") {
        return Err(GoldError::NotBpmn(format!(
            "root element is '{}' in namespace {:?}",
            root.tag_name().name(),
            root.tag_name().namespace()
        )));
    }

    let mut elements = Vec::new();
    let mut arcs = Vec::new();
    for node in root.descendants().filter(|n| n.is_element() && is_bpmn(n)) {
        let tag = node.tag_name().name();
        let id = node.attribute("id").unwrap_or_default().to_string();
        let name = node.attribute("name").unwrap_or_default().to_string();
        if NODE_TAGS.contains(&tag) {
            let element_type = match tag {
                "participant" => "pool".to_string(),
                other => other.to_lowercase(),
            };
            elements.push(GoldElement { id, name, element_type });
        } else if FLOW_TAGS.contains(&tag) {
            let source = node.attribute("sourceRef").unwrap_or_default().to_string();
            let target = node.attribute("targetRef").unwrap_or_default().to_string();
            arcs.push((id.clone(), source, target, tag.to_lowercase(), name.clone()));
            elements.push(GoldElement { id, name, element_type: tag.to_lowercase() });
        }
    }

    let mut seen = HashSet::new();
    for e in &elements {
        if !seen.insert(e.id.as_str()) {
            return Err(GoldError::DuplicateId(e.id.clone()));
        }
    }

    let names: HashMap<&str, &str> = elements.iter().map(|e| (e.id.as_str(), e.name.as_str())).collect();
    let mut relations = Vec::new();
    let mut triples = HashSet::new();
    for (flow_id, source, target, relation_type, label) in arcs {
        let lookup = |id: &str| {
            names
                .get(id)
                .map(|n| n.to_string())
                .ok_or_else(|| GoldError::DanglingReference { flow: flow_id.clone(), id: id.to_string() })
        };
        let source_name = lookup(&source)?;
        let target_name = lookup(&target)?;
        if !triples.insert((source.clone(), target.clone(), relation_type.clone())) {
            continue;
        }
        relations.push(GoldRelation { source_id: source, target_id: target, source_name, target_name, relation_type, label });
    }

    Ok(GoldStandard { diagram_id: diagram_id.to_string(), elements, relations })
}

fn write_csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV write");
    for row in rows {
        w.write_record(&row).expect("in-memory CSV write");
    }
    w.into_inner().expect("in-memory CSV flush")
}

/// Serializes the gold tables as RFC 4180 CSV (UTF-8, LF line endings).
pub fn gold_to_csv(gold: &GoldStandard) -> (Vec<u8>, Vec<u8>) {
    let elements =
        write_csv(ELEMENTS_HEADER, gold.elements.iter().map(|e| [e.id.clone(), e.name.clone(), e.element_type.clone()]));
    let relations = write_csv(
        RELATIONS_HEADER,
        gold.relations.iter().map(|r| {
            [
                r.source_id.clone(),
                r.source_name.clone(),
                r.target_id.clone(),
                r.target_name.clone(),
                r.relation_type.clone(),
                r.label.clone(),
            ]
        }),
    );
    (elements, relations)
}

fn read_csv<const N: usize>(bytes: &[u8], table: &'static str, header: [&str; N]) -> Result<Vec<[String; N]>, GoldError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut records = r.records();
    let first = records.next().transpose().map_err(|e| GoldError::BadRow { table, line: 1, reason: e.to_string() })?;
    let found: Vec<String> = first.map(|rec| rec.iter().map(str::to_string).collect()).unwrap_or_default();
    if found != header {
        return Err(GoldError::BadHeader { table, expected: header.join(","), found: found.join(",") });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| GoldError::BadRow {
            table,
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        let row: [String; N] = fields.try_into().map_err(|f: Vec<String>| GoldError::BadRow {
            table,
            line,
            reason: format!("expected {N} columns, found {}", f.len()),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Inverse of [`gold_to_csv`].
pub fn csv_to_gold(elements_csv: &[u8], relations_csv: &[u8], diagram_id: &str) -> Result<GoldStandard, GoldError> {
    let elements: Vec<GoldElement> = read_csv(elements_csv, "elements", ELEMENTS_HEADER)?
        .into_iter()
        .map(|[id, name, element_type]| GoldElement { id, name, element_type })
        .collect();
    let ids: HashSet<&str> = elements.iter().map(|e| e.id.as_str()).collect();
    let mut relations = Vec::new();
    for [source_id, source_name, target_id, target_name, relation_type, label] in
        read_csv(relations_csv, "relations", RELATIONS_HEADER)?
    {
        for id in [&source_id, &target_id] {
            if !ids.contains(id.as_str()) {
                return Err(GoldError::DanglingReference { flow: format!("{source_id}->{target_id}"), id: id.clone() });
            }
        }
        relations.push(GoldRelation { source_id, target_id, source_name, target_name, relation_type, label });
    }
    Ok(GoldStandard { diagram_id: diagram_id.to_string(), elements, relations })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<bpmn:definitions xmlns:bpmn="http://www.omg.org/spec/BPMN/20100524/MODEL" id="d">
  <bpmn:process id="p">
    <bpmn:startEvent id="s" name="Order received"/>
    <bpmn:task id="t" name="Check order"/>
    <bpmn:endEvent id="e"/>
    <bpmn:sequenceFlow id="f1" sourceRef="s" targetRef="t"/>
    <bpmn:sequenceFlow id="f2" sourceRef="t" targetRef="e"/>
  </bpmn:process>
</bpmn:definitions>"#;

    fn node_count(g: &GoldStandard) -> usize {
        g.elements.iter().filter(|e| !FLOW_TAGS.iter().any(|f| f.to_lowercase() == e.element_type)).count()
    }

    #[test]
    fn minimal_chain() {
        let g = parse_bpmn_xml(CHAIN.as_bytes(), "process_001").unwrap();
        assert_eq!(node_count(&g), 3);
        assert_eq!(g.relations.len(), 2);
        assert_eq!(g.relations[0].source_name, "Order received");
        assert_eq!(g.relations[0].target_name, "Check order");
        assert_eq!(g.relations[1].source_name, "Check order");
        assert_eq!(g.relations[1].target_name, "");
        assert_eq!(g.elements[2].element_type, "endevent");
        assert_eq!(g.elements[2].name, "");
        // Arcs also appear as elements, named by their label.
        assert_eq!(g.elements.len(), 5);
        assert_eq!(g.elements[3].element_type, "sequenceflow");
    }

    #[test]
    fn empty_definitions() {
        let xml = r#"<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL"/>"#;
        let g = parse_bpmn_xml(xml.as_bytes(), "x").unwrap();
        assert!(g.elements.is_empty() && g.relations.is_empty());
    }

    #[test]
    fn error_cases() {
        assert!(matches!(parse_bpmn_xml(b"<definitions", "x"), Err(GoldError::MalformedXml(_))));
        assert!(matches!(parse_bpmn_xml(b"<svg/>", "x"), Err(GoldError::NotBpmn(_))));
        let dangling = r#"<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">
            <process id="p"><task id="a"/><sequenceFlow id="f" sourceRef="a" targetRef="zz"/></process></definitions>"#;
        assert!(matches!(
            parse_bpmn_xml(dangling.as_bytes(), "x"),
            Err(GoldError::DanglingReference { ref id, .. }) if id == "zz"
        ));
        let dup = r#"<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">
            <process id="p"><task id="a"/><task id="a"/></process></definitions>"#;
        assert!(matches!(parse_bpmn_xml(dup.as_bytes(), "x"), Err(GoldError::DuplicateId(_))));
    }

    #[test]
    fn pools_lanes_and_message_flows() {
        let xml = r#"<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL"
                         xmlns:camunda="http://camunda.org/schema/1.0/bpmn">
          <collaboration id="c">
            <participant id="P1" name="Shop" processRef="p1"/>
            <participant id="P2" name="Customer"/>
            <messageFlow id="m" name="invoice" sourceRef="t" targetRef="P2"/>
          </collaboration>
          <process id="p1">
            <laneSet id="ls"><lane id="L" name="Billing"><flowNodeRef>t</flowNodeRef></lane></laneSet>
            <userTask id="t" name="Send invoice" camunda:assignee="x"/>
          </process>
        </definitions>"#;
        let g = parse_bpmn_xml(xml.as_bytes(), "x").unwrap();
        let types: Vec<&str> = g.elements.iter().map(|e| e.element_type.as_str()).collect();
        assert_eq!(types, ["pool", "pool", "messageflow", "lane", "usertask"]);
        assert_eq!(g.relations[0].label, "invoice");
        assert_eq!(g.relations[0].target_name, "Customer");
    }

    #[test]
    fn elements_outside_the_model_namespace_are_ignored() {
        let xml = r#"<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL"
                         xmlns:x="urn:vendor"><process id="p"><x:task id="v"/><task id="a"/></process></definitions>"#;
        let g = parse_bpmn_xml(xml.as_bytes(), "x").unwrap();
        assert_eq!(g.elements.len(), 1);
    }

    #[test]
    fn csv_shapes() {
        let empty = GoldStandard::default();
        let (e, r) = gold_to_csv(&empty);
        assert_eq!(e, b"id,name,type\n");
        assert_eq!(r, b"source_id,source_name,target_id,target_name,type,label\n");
        assert_eq!(csv_to_gold(&e, &r, "").unwrap(), empty);

        let g = parse_bpmn_xml(CHAIN.as_bytes(), "process_001").unwrap();
        let (e, r) = gold_to_csv(&g);
        // Three nodes plus two arcs-as-elements, and one header each.
        assert_eq!(String::from_utf8(e.clone()).unwrap().lines().count(), 6);
        assert_eq!(String::from_utf8(r.clone()).unwrap().lines().count(), 3);
        assert_eq!(csv_to_gold(&e, &r, "process_001").unwrap(), g);
    }

    #[test]
    fn comma_names_are_quoted() {
        let g = GoldStandard {
            diagram_id: "d".into(),
            elements: vec![GoldElement { id: "a".into(), name: "Ship, then bill".into(), element_type: "task".into() }],
            relations: vec![],
        };
        let (e, r) = gold_to_csv(&g);
        assert!(String::from_utf8_lossy(&e).contains("\"Ship, then bill\""));
        assert_eq!(csv_to_gold(&e, &r, "d").unwrap(), g);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            csv_to_gold(b"id,label,type\n", RELATIONS_HEADER.join(",").as_bytes(), ""),
            Err(GoldError::BadHeader { .. })
        ));
        assert!(matches!(
            csv_to_gold(b"id,name,type\na,b\n", b"source_id,source_name,target_id,target_name,type,label\n", ""),
            Err(GoldError::BadRow { .. })
        ));
        assert!(matches!(
            csv_to_gold(b"id,name,type\na,A,task\n", b"source_id,source_name,target_id,target_name,type,label\na,A,b,B,sequenceflow,\n", ""),
            Err(GoldError::DanglingReference { ref id, .. }) if id == "b"
        ));
    }

    #[test]
    fn parsing_is_deterministic() {
        assert_eq!(parse_bpmn_xml(CHAIN.as_bytes(), "a").unwrap(), parse_bpmn_xml(CHAIN.as_bytes(), "a").unwrap());
    }
}
