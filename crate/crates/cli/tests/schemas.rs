use std::path::{Path, PathBuf};

use jsonschema::{Resource, Validator};
use serde_json::{json, Value};

use platycosm_cli::{execute, report_json, Cli, Ctx, Tolerances};
use platycosm_core::fixtures;

const BASE: &str = "https://platycosm.invalid/schemas/";

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(schema_dir().join(name)).unwrap()).unwrap()
}

fn validator(name: &str) -> Validator {
    let mut opts = jsonschema::options();
    for dep in ["common.schema.json", "representation.schema.json", "class-point.schema.json"] {
        opts = opts.with_resource(format!("{BASE}{dep}"), Resource::from_contents(load(dep)).unwrap());
    }
    opts.build(&load(name)).unwrap()
}

fn assert_valid(v: &Validator, instance: &Value, what: &str) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{what}: {errors:?}");
}

fn report(args: &[&str]) -> Value {
    use clap::Parser;
    let cli = Cli::try_parse_from(std::iter::once("platycosm").chain(args.iter().copied())).unwrap();
    let ctx = Ctx::new(cli.seed, Tolerances::with_overrides(&cli.tol).unwrap());
    let out = execute(&cli.command, &ctx).unwrap();
    report_json(&cli.command.label(), &ctx, &out)
}

#[test]
fn schemas_are_valid_json_schema() {
    for entry in std::fs::read_dir(schema_dir()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let _ = validator(&name);
        assert_eq!(load(&name)["$id"], format!("{BASE}{name}"), "{name}");
    }
}

#[test]
fn reports_match_the_report_schema() {
    let v = validator("report.schema.json");
    let cases: &[&[&str]] = &[
        &["verify", "G2"],
        &["char", "rigid"],
        &["char", "lift", "--point", "[[2,0],[1,0],[-1,0]]"],
        &["higgs", "solve", "--fixture", "g6-line", "--grid", "4"],
        &["spectral", "roundtrip", "--fixture", "sine", "--grid", "4"],
        &["g2", "classify", "--input", "{\"Section\":[0,0,1.5]}"],
        &["ale", "demo", "--xi", "1,0,0", "--samples", "5"],
    ];
    for args in cases {
        assert_valid(&v, &report(args), &format!("{args:?}"));
    }
    assert!(!v.is_valid(&json!({ "command": "x", "seed": 1, "tolerances": { "nosuch": 1.0 }, "pass": true, "result": {} })));
}

#[test]
fn fixtures_match_the_input_schemas() {
    let rep = validator("representation.schema.json");
    for name in fixtures::REP_FIXTURES {
        assert_valid(&rep, &serde_json::to_value(fixtures::representation(name).unwrap()).unwrap(), name);
    }
    let field = validator("higgs-field.schema.json");
    for name in fixtures::FIELD_FIXTURES {
        assert_valid(&field, &serde_json::to_value(fixtures::field(name, 2).unwrap()).unwrap(), name);
    }
    let class = validator("class-point.schema.json");
    assert_valid(&class, &json!([[2, 0], [-1, 0], [-1, 0]]), "shorthand");
    let rows = platycosm_core::char_variety::TorusClass::sl2([num_complex::Complex64::new(0.5, 1.0); 3]);
    assert_valid(&class, &serde_json::to_value(&rows).unwrap(), "rows");
    assert!(!class.is_valid(&json!([[2, 0], [-1, 0]])));
    let smoothing = validator("smoothing-input.schema.json");
    let input = platycosm_core::g2_structures::SmoothingInput::Section([0.0, 2.0, 0.0]);
    assert_valid(&smoothing, &serde_json::to_value(&input).unwrap(), "section");
    let input = platycosm_core::g2_structures::SmoothingInput::Class(rows);
    assert_valid(&smoothing, &serde_json::to_value(&input).unwrap(), "class");
}
