//! Whole analysis through the command-line entry point: summary, selection,
//! fit, bootstrap and diagnostics, with artifacts written to a directory.
//!
//!     cargo run --release --example pipeline -- engagement.csv out/

use std::io::Write;

mod common;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = std::env::temp_dir().join("parsimix-pipeline");
    let (input, out) = match (args.next(), args.next()) {
        (Some(input), out_arg) => (input, out_arg.map(Into::into).unwrap_or(out)),
        (None, _) => {
            std::fs::create_dir_all(&out).unwrap();
            let x = common::survey(717, 42);
            let path = out.join("survey.csv");
            let mut f = std::fs::File::create(&path).unwrap();
            writeln!(f, "PRE_ENG_COND;PRE_ENG_COGN;PRE_ENG_EMOC").unwrap();
            for i in 0..x.n() {
                let r = x.row(i);
                writeln!(f, "{};{};{}", r[0], r[1], r[2]).unwrap();
            }
            (path.to_string_lossy().into_owned(), out)
        }
    };
    let out = out.to_string_lossy().into_owned();
    let common_args = [
        "--input", &input, "--sep", ";",
        "--columns", "BehvEngmnt,CognEngmnt,EmotEngmnt",
        "--rename", "PRE_ENG_COND=BehvEngmnt",
        "--rename", "PRE_ENG_COGN=CognEngmnt",
        "--rename", "PRE_ENG_EMOC=EmotEngmnt",
        "--out", &out,
    ];
    let steps: [&[&str]; 5] = [
        &["summary"],
        &["select"],
        &["fit", "--model", "VVI", "--k", "3"],
        &["bootstrap", "--type", "bs", "--nboot", "999"],
        &["diagnose"],
    ];
    for step in steps {
        let mut argv = vec!["parsimix"];
        argv.extend_from_slice(step);
        argv.extend_from_slice(&common_args);
        println!("\n$ {}", argv[..2].join(" "));
        let status = parsimix::cli::run(argv);
        if status != 0 {
            std::process::exit(status);
        }
    }
    println!("\nartifacts in {out}");
}
