//! Generates the C header with cbindgen into both OUT_DIR and the crate's
//! include/ directory, so downstream builds can consume either copy.

use std::path::PathBuf;

fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let out_dir = PathBuf::from(std::env::var("OUT_DIR").expect("out dir"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let bindings = cbindgen::generate(&crate_dir);
    match bindings {
        Ok(b) => {
            b.write_to_file(out_dir.join("so3vae.h"));
            b.write_to_file(PathBuf::from(&crate_dir).join("include/so3vae.h"));
        }
        Err(e) => {
            // the committed include/so3vae.h still ships; fail softly so a
            // broken cbindgen install cannot break the build
            println!("cargo:warning=header generation failed: {e}");
        }
    }
}
