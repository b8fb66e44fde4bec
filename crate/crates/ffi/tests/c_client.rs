//! Compiles a C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// The test binary lives next to the library artifacts in `deps/`.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = deps.join("libmcf_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    lib
}

fn cc() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = crate_dir().join("include/mcf.h");
    for (lang, std) in [("c", "-std=c99"), ("c++", "-std=c++11")] {
        let status = Command::new(cc())
            .args(["-x", lang, std, "-fsyntax-only", "-Wall", "-Werror"])
            .arg(&header)
            .status()
            .expect("C compiler available");
        assert!(status.success(), "header does not compile as {lang}");
    }
}

#[test]
fn c_client_runs() {
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("client");
    let src = crate_dir().join("tests/c/client.c");
    let include = crate_dir().join("include");
    let lib: &Path = &static_lib();
    let status = Command::new(cc())
        .args(["-std=c99", "-Wall", "-Werror", "-O1"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "client failed to compile");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "client failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
