use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let out = crate_dir.join("include").join("polyhazard.h");
    std::fs::create_dir_all(out.parent().unwrap()).unwrap();

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        header: Some("/* C interface for the polyhazard sampler. Generated by cbindgen. */".into()),
        include_guard: Some("POLYHAZARD_H".into()),
        cpp_compat: true,
        documentation: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };

    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(&out);
        }
        Err(err) => {
            // Header generation failures should not break `cargo check` of
            // dependents; the library itself is unaffected.
            println!("cargo:warning=cbindgen failed: {err}");
        }
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
