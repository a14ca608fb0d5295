//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

/// Per-class sentence middles: five fixed lexical templates per class.
pub const TEMPLATES: [(&str, [&str; 5]); 5] = [
    (
        "false",
        [
            " did not interfere with ",
            " showed no interaction with ",
            " had no effect on levels of ",
            " was administered without affecting ",
            " remained unchanged when given with ",
        ],
    ),
    (
        "mechanism",
        [
            " significantly inhibited the absorption of ",
            " decreased the plasma concentration of ",
            " accelerated the metabolism of ",
            " reduced the clearance of ",
            " elevated serum levels of ",
        ],
    ),
    (
        "effect",
        [
            " increased the bleeding risk when combined with ",
            " potentiated the sedative effect of ",
            " caused severe hypotension together with ",
            " enhanced the toxicity of ",
            " worsened adverse reactions of ",
        ],
    ),
    (
        "advise",
        [
            " should never be prescribed alongside ",
            " must be avoided in combination with ",
            " is not recommended together with ",
            " requires caution when used with ",
            " should be discontinued before starting ",
        ],
    ),
    (
        "int",
        [
            " reportedly interacts with ",
            " is known to interact with ",
            " clinically interacts with ",
            " demonstrated interactions with ",
            " may interact with ",
        ],
    ),
];

/// Synthetic five-class corpus as one XML document set:
/// `sentences_per_class` sentences per class, each with two entities and one
/// gold pair, cycling through the five templates of its class.
pub fn synthetic_corpus_xml(sentences_per_class: usize) -> String {
    let prefix = "Reports state that ";
    let mut docs: Vec<String> = vec![String::new(); 10];
    let mut counter = 0usize;
    for (class_idx, (ddi_type, middles)) in TEMPLATES.iter().enumerate() {
        for j in 0..sentences_per_class {
            let middle = middles[j % middles.len()];
            let name1 = format!("alphadrug{}x{}", class_idx, j);
            let name2 = format!("betadrug{}x{}", class_idx, j);
            let text = format!("{}{}{}{}.", prefix, name1, middle, name2);
            let s1 = prefix.chars().count();
            let e1 = s1 + name1.chars().count() - 1;
            let s2 = e1 + 1 + middle.chars().count();
            let e2 = s2 + name2.chars().count() - 1;
            let doc_idx = counter % docs.len();
            let sid = format!("doc{}.s{}", doc_idx, counter);
            let ddi_attr = if *ddi_type == "false" {
                r#"ddi="false""#.to_string()
            } else {
                format!(r#"ddi="true" type="{}""#, ddi_type)
            };
            write!(
                docs[doc_idx],
                r#"  <sentence id="{sid}" text="{text}">
    <entity id="{sid}.e0" charOffset="{s1}-{e1}" type="drug" text="{name1}"/>
    <entity id="{sid}.e1" charOffset="{s2}-{e2}" type="drug" text="{name2}"/>
    <pair id="{sid}.p0" e1="{sid}.e0" e2="{sid}.e1" {ddi_attr}/>
  </sentence>
"#
            )
            .unwrap();
            counter += 1;
        }
    }
    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<corpus>\n");
    for (i, body) in docs.iter().enumerate() {
        if body.is_empty() {
            continue;
        }
        write!(xml, "<document id=\"doc{}\">\n{}</document>\n", i, body).unwrap();
    }
    xml.push_str("</corpus>\n");
    xml
}

pub fn write_corpus(dir: &Path, name: &str, xml: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, xml).unwrap();
    path
}

/// The reference gold-by-predicted counts (rows and columns in the order
/// False, Mechanism, Effect, Advise, Int).
pub const REFERENCE_MATRIX: [[u64; 5]; 5] = [
    [4490, 138, 49, 45, 15],
    [68, 229, 2, 3, 0],
    [101, 12, 230, 15, 2],
    [49, 5, 0, 165, 2],
    [13, 3, 37, 0, 43],
];

pub const LABELS: [&str; 5] = ["False", "Mechanism", "Effect", "Advise", "Int"];

/// A predictions TSV realizing the reference counts.
pub fn reference_predictions_tsv() -> String {
    let mut out = String::from(
        "doc_id\tsent_id\tpair_id\tgold\tpredicted\tp_False\tp_Mechanism\tp_Effect\tp_Advise\tp_Int\n",
    );
    let mut row_id = 0usize;
    for (g, row) in REFERENCE_MATRIX.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            for _ in 0..count {
                let mut probs = [0.05f64; 5];
                probs[p] = 0.8;
                write!(
                    out,
                    "doc\tdoc.s{row_id}\tdoc.s{row_id}.p0\t{}\t{}",
                    LABELS[g], LABELS[p]
                )
                .unwrap();
                for prob in probs {
                    write!(out, "\t{:.9}", prob).unwrap();
                }
                out.push('\n');
                row_id += 1;
            }
        }
    }
    out
}
