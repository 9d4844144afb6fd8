//! Drive a run from a TOML document and emit CSV/JSON records, as the CLI does.
use scbf::config::parse_config;
use scbf::experiment::run_experiment;
use scbf::records::emit_records;

const DOC: &str = r#"
command = "couple"
mode = "tilted"
T = 1.0
times = [0.25, 0.5, 0.75, 1.0]
paths = 50
distance = 0.1

[noise]
kind = "additive"
trace = 0.01

[initial]
kind = "random"
norm = 0.2
"#;

fn main() -> scbf::Result<()> {
    let spec = parse_config(DOC)?;
    println!("{}", spec.doc.to_toml()?);
    let records = run_experiment(&spec)?;
    let dir = std::env::temp_dir().join("scbf-example-out");
    for f in emit_records(&records, &dir, &spec.doc.formats)? {
        println!("wrote {}", f.display());
    }
    for r in &records {
        for v in &r.verdicts {
            println!("{} [{}] {}", if v.pass { "PASS" } else { "FAIL" }, r.id, v.name);
        }
    }
    Ok(())
}
