//! Builds a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

/// The static library built alongside this test binary. Test builds leave it
/// in `deps/` without copying it up to the profile directory.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    [deps, deps.parent().unwrap()]
        .iter()
        .map(|d| d.join("libneuroisp_ffi.a"))
        .find(|p| p.exists())
        .expect("static library not built")
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib();
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH, skipping");
        return;
    }

    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");

    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(stdout.starts_with(&format!("ok {}", env!("CARGO_PKG_VERSION"))), "{stdout}");
}
