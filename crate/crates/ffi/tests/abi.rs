use std::ffi::{c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use adjoint_lab_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = adjl_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Problem(*mut AdjlProblem);

impl Problem {
    fn zoo(name: &str) -> Self {
        let mut p = ptr::null_mut();
        assert_eq!(unsafe { adjl_problem_from_zoo(cstr(name).as_ptr(), &mut p) }, AdjlStatus::Ok);
        Problem(p)
    }

    fn solve(&self, scheme: &str, n: usize) -> Traj {
        let mut t = ptr::null_mut();
        let status = unsafe { adjl_solve_forward(self.0, cstr(scheme).as_ptr(), n, &mut t) };
        assert_eq!(status, AdjlStatus::Ok);
        Traj(t)
    }

    fn gradient(&self, t: &Traj, method: AdjlMethod, backward: Option<&str>, p: usize) -> Result<Vec<f64>, AdjlStatus> {
        let mut g = vec![0.0; p];
        let b = backward.map(cstr);
        let bp = b.as_ref().map_or(ptr::null(), |s| s.as_ptr());
        match unsafe { adjl_gradient(self.0, t.0, method, bp, g.as_mut_ptr(), g.len()) } {
            AdjlStatus::Ok => Ok(g),
            s => Err(s),
        }
    }
}

impl Drop for Problem {
    fn drop(&mut self) {
        unsafe { adjl_problem_free(self.0) }
    }
}

struct Traj(*mut AdjlTrajectory);

impl Drop for Traj {
    fn drop(&mut self) {
        unsafe { adjl_trajectory_free(self.0) }
    }
}

#[test]
fn every_method_reaches_the_closed_form() {
    let p = Problem::zoo("linear-scalar");
    let t = p.solve("rk4", 1000);
    let exact = 0.3f64.exp();
    for m in [
        AdjlMethod::ContinuousAdjoint,
        AdjlMethod::ContinuousAdjointHardReset,
        AdjlMethod::DiscreteAdjoint,
        AdjlMethod::Backprop,
        AdjlMethod::FiniteDifference,
        AdjlMethod::Tangent,
    ] {
        let g = p.gradient(&t, m, None, 1).unwrap();
        assert!((g[0] - exact).abs() <= 1e-6 * exact, "{m:?}: {}", g[0]);
    }
    let g = p.gradient(&t, AdjlMethod::ContinuousAdjoint, Some("euler"), 1).unwrap();
    assert!((g[0] - exact).abs() <= 1e-3);
}

#[test]
fn dims_and_setters() {
    let p = Problem::zoo("linear-system");
    let (mut n, mut np) = (0usize, 0usize);
    assert_eq!(unsafe { adjl_problem_dims(p.0, &mut n, &mut np) }, AdjlStatus::Ok);
    assert_eq!((n, np), (3, 9));

    let z0 = [0.1, 0.2, 0.3];
    assert_eq!(unsafe { adjl_problem_set_z0(p.0, z0.as_ptr(), 3) }, AdjlStatus::Ok);
    assert_eq!(unsafe { adjl_problem_set_z0(p.0, z0.as_ptr(), 2) }, AdjlStatus::Dimension);
    assert!(last_error().contains("expected 3"));

    let t = p.solve("ab2", 40);
    let mut zt = [0.0; 3];
    assert_eq!(unsafe { adjl_trajectory_final_state(t.0, zt.as_mut_ptr(), 3) }, AdjlStatus::Ok);
    assert!(zt.iter().all(|x| x.is_finite() && *x != 0.0));

    let d = p.gradient(&t, AdjlMethod::DiscreteAdjoint, None, 9).unwrap();
    let b = p.gradient(&t, AdjlMethod::Backprop, None, 9).unwrap();
    assert!(adjoint_lab::relative_discrepancy(&d, &b) <= 1e-12);
    assert_eq!(p.gradient(&t, AdjlMethod::Backprop, None, 4), Err(AdjlStatus::Dimension));

    // A stale trajectory is refused once theta changes.
    let theta = [0.0; 9];
    assert_eq!(unsafe { adjl_problem_set_theta(p.0, theta.as_ptr(), 9) }, AdjlStatus::Ok);
    assert_eq!(p.gradient(&t, AdjlMethod::Backprop, None, 9), Err(AdjlStatus::InvalidArgument));
    assert!(last_error().contains("trajectory"));
}

#[test]
fn errors_are_status_codes() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { adjl_problem_from_zoo(cstr("nope").as_ptr(), &mut p) }, AdjlStatus::UnknownName);
    assert!(p.is_null());
    assert!(last_error().contains("nope"));
    assert_eq!(unsafe { adjl_problem_from_zoo(ptr::null(), &mut p) }, AdjlStatus::NullPointer);

    let prob = Problem::zoo("linear-scalar");
    let mut t = ptr::null_mut();
    let s = unsafe { adjl_solve_forward(prob.0, cstr("rk5").as_ptr(), 10, &mut t) };
    assert_eq!(s, AdjlStatus::UnknownName);
    let s = unsafe { adjl_solve_forward(prob.0, cstr("rk4").as_ptr(), 0, &mut t) };
    assert_eq!(s, AdjlStatus::InvalidArgument);

    let traj = prob.solve("rk4", 10);
    assert_eq!(prob.gradient(&traj, AdjlMethod::Backprop, Some("rk4"), 1), Err(AdjlStatus::InvalidArgument));

    // Success clears the previous message.
    assert_eq!(unsafe { adjl_problem_dims(prob.0, &mut 0, &mut 0) }, AdjlStatus::Ok);
    assert!(adjl_last_error().is_null());
    unsafe {
        adjl_problem_free(ptr::null_mut());
        adjl_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn run_suite_reports_pass_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = cstr(dir.path().to_str().unwrap());
    let mut passed: c_int = -1;
    let s = unsafe { adjl_run_suite(cstr("schema_version = 1\n").as_ptr(), out.as_ptr(), &mut passed) };
    assert_eq!((s, passed), (AdjlStatus::Ok, 1));
    assert!(dir.path().join("summary.json").exists());

    let s = unsafe { adjl_run_suite(cstr("schema_version = 7\n").as_ptr(), out.as_ptr(), &mut passed) };
    assert_eq!(s, AdjlStatus::Config);
    assert!(last_error().contains("schema_version"));
}

/// `target/<profile>`, two levels above this test executable.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = profile_dir().join("libadjoint_lab_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 1.3498588"));
}
