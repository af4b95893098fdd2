use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use obfusbench_ffi::*;

fn last_error() -> String {
    let p = obfb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    obfb_string_free(s);
    out
}

#[test]
fn scalar_functions() {
    unsafe {
        let mut n = 0u64;
        assert_eq!(obfb_sample_size(1354, 0.95, 0.05, 0.5, &mut n), ObfbStatus::Ok);
        assert_eq!(n, 299);
        assert!(obfb_last_error().is_null());
        assert_eq!(obfb_sample_size(0, 0.95, 0.05, 0.5, &mut n), ObfbStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(obfb_sample_size(10, 0.95, 0.05, 0.5, ptr::null_mut()), ObfbStatus::NullPointer);

        let mut p = 0f64;
        assert_eq!(obfb_pass_at_k(5, 1, 5, &mut p), ObfbStatus::Ok);
        assert_eq!(p, 1.0);
        assert_eq!(obfb_pass_at_k(4, 2, 2, &mut p), ObfbStatus::Ok);
        assert!((p - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(obfb_pass_at_k(2, 3, 1, &mut p), ObfbStatus::InvalidArgument);

        let (mut r, mut ch) = (0f64, ObfbChange::Equal);
        assert_eq!(obfb_decrease_ratio(18.4, 6.9, &mut r, &mut ch), ObfbStatus::Ok);
        assert!((r - 0.625).abs() < 1e-9);
        assert_eq!(ch, ObfbChange::LargeDecrease);
        assert_eq!(obfb_decrease_ratio(20.0, 22.0, &mut r, &mut ch), ObfbStatus::Ok);
        assert_eq!(ch, ObfbChange::SmallIncrease);
        assert_eq!(obfb_decrease_ratio(0.0, 1.0, &mut r, &mut ch), ObfbStatus::InvalidArgument);
    }
}

#[test]
fn classification() {
    unsafe {
        let mut rules = ptr::null_mut();
        assert_eq!(obfb_ruleset_builtin(&mut rules), ObfbStatus::Ok);
        let msg = CString::new("'struct point' has no member named 'z'").unwrap();
        let mut idx = 99u32;
        assert_eq!(obfb_classify_message(rules, msg.as_ptr(), &mut idx), ObfbStatus::Ok);
        assert_eq!(CStr::from_ptr(obfb_category_sub(idx)).to_str().unwrap(), "Non-existent structure member");
        assert_eq!(CStr::from_ptr(obfb_category_major(idx)).to_str().unwrap(), "Data Structure and Member Access Errors");
        let other = CString::new("expected ';' before 'return'").unwrap();
        assert_eq!(obfb_classify_message(rules, other.as_ptr(), &mut idx), ObfbStatus::Ok);
        assert_eq!(idx, obfb_category_count() - 1);
        assert!(obfb_category_sub(obfb_category_count()).is_null());
        assert_eq!(obfb_classify_message(ptr::null(), msg.as_ptr(), &mut idx), ObfbStatus::NullPointer);
        obfb_ruleset_free(rules);

        let bad = CString::new("[[rule]]\nsub = \"nope\"\n").unwrap();
        let mut rules = ptr::null_mut();
        assert_eq!(obfb_ruleset_parse(bad.as_ptr(), &mut rules), ObfbStatus::Parse);
        assert!(rules.is_null());
    }
}

#[test]
fn cases_prompts_and_obfuscation() {
    let core = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core");
    let root = core.join("fixtures/miniproj");
    let project = obfusbench::cfront::Project::load(&root, &Default::default()).unwrap();
    let descs = obfusbench::corpus::package::load_descriptions(&core.join("fixtures/miniproj-descriptions.json")).unwrap();
    let cases = obfusbench::corpus::cases_from_project(
        &project,
        "mini",
        "c",
        &descs,
        obfusbench::corpus::Scenario::Generation,
        &Default::default(),
        0,
    )
    .unwrap();
    let pick = |f: &str| CString::new(serde_json::to_string(cases.iter().find(|c| c.function == f).unwrap()).unwrap()).unwrap();
    unsafe {
        let mut p = ptr::null_mut();
        let root_c = CString::new(root.to_str().unwrap()).unwrap();
        assert_eq!(obfb_project_load(root_c.as_ptr(), &mut p), ObfbStatus::Ok);

        let mut case = ptr::null_mut();
        assert_eq!(obfb_case_from_json(pick("clamp_add").as_ptr(), &mut case), ObfbStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(obfb_case_prompt(case, &mut s), ObfbStatus::Ok);
        let prompt = take(s);
        assert!(prompt.contains("int clamp_add(int a, int b)"));

        let stratum = CString::new("symbol").unwrap();
        let mut v = ptr::null_mut();
        assert_eq!(obfb_obfuscate(p, case, stratum.as_ptr(), 7, &mut v), ObfbStatus::Ok);
        assert_eq!(obfb_case_to_json(v, &mut s), ObfbStatus::Ok);
        let json = take(s);
        assert!(json.contains("#symbol"));
        // The test suite calls clamp_add, so only its locals are renamed.
        assert!(json.contains("\"function\":\"clamp_add\""));
        assert!(!json.contains("int raw"));
        // Already obfuscated.
        let mut w = ptr::null_mut();
        assert_eq!(obfb_obfuscate(p, v, stratum.as_ptr(), 7, &mut w), ObfbStatus::NotApplicable);
        obfb_case_free(v);

        let mut leaf = ptr::null_mut();
        assert_eq!(obfb_case_from_json(pick("add").as_ptr(), &mut leaf), ObfbStatus::Ok);
        let structure = CString::new("structure").unwrap();
        assert_eq!(obfb_obfuscate(p, leaf, structure.as_ptr(), 0, &mut w), ObfbStatus::NotApplicable);
        let original = CString::new("original").unwrap();
        assert_eq!(obfb_obfuscate(p, leaf, original.as_ptr(), 0, &mut w), ObfbStatus::InvalidArgument);
        obfb_case_free(leaf);
        obfb_case_free(case);

        let bad = CString::new("{").unwrap();
        assert_eq!(obfb_case_from_json(bad.as_ptr(), &mut case), ObfbStatus::Parse);
        let missing = CString::new("/nonexistent/dir").unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(obfb_project_load(missing.as_ptr(), &mut q), ObfbStatus::Io);
        obfb_project_free(p);
        obfb_project_free(ptr::null_mut());
    }
}
