use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR"));
    println!("cargo:rerun-if-changed=src/lib.rs");

    let mut config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("FLOWLAB_H".into()),
        documentation: true,
        cpp_compat: true,
        ..Default::default()
    };
    config.enumeration.prefix_with_name = true;
    config.enumeration.rename_variants = cbindgen::RenameRule::ScreamingSnakeCase;

    cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
        .expect("Unable to generate bindings")
        .write_to_file(dir.join("include").join("flowlab.h"));
}
