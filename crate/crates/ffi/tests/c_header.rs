//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "lrsurf.h"

int main(int argc, char **argv) {
    double x[64], y[64], z[64];
    size_t n = 0;
    for (int i = 0; i < 8; i++)
        for (int j = 0; j < 8; j++) {
            x[n] = i; y[n] = j; z[n] = 2.0 * i - j;
            n++;
        }
    LrsSurface *s = NULL;
    if (lrs_fit(x, y, z, n, "F7", &s) != LRS_STATUS_OK) {
        fprintf(stderr, "fit: %s\n", lrs_last_error());
        return 1;
    }
    double v = 0;
    if (lrs_surface_evaluate(s, 3.0, 2.0, &v) != LRS_STATUS_OK) return 2;
    if (v < 3.99 || v > 4.01) return 3;
    if (lrs_surface_evaluate(s, 30.0, 2.0, &v) != LRS_STATUS_OUT_OF_DOMAIN) return 4;
    if (strlen(lrs_last_error()) == 0) return 5;
    if (lrs_surface_write(s, argv[1]) != LRS_STATUS_OK) return 6;
    lrs_surface_free(s);
    printf("ok\n");
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("liblrsurf_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).arg(dir.path().join("s.lrsurf")).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
    assert!(dir.path().join("s.lrsurf").exists());
}
