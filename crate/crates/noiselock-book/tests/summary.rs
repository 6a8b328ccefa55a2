use std::path::Path;

// Every chapter the guide lists has to be compiled as doc-tests, and every
// compiled chapter has to be reachable from the guide.
#[test]
fn summary_and_lib_list_the_same_chapters() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let summary = std::fs::read_to_string(root.join("../../book/src/SUMMARY.md")).unwrap();
    let lib = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();

    let mut listed: Vec<&str> = summary
        .split("](")
        .skip(1)
        .map(|s| &s[..s.find(')').unwrap()])
        .collect();
    let mut included: Vec<&str> = lib
        .split("book/src/")
        .skip(1)
        .map(|s| &s[..s.find('"').unwrap()])
        .collect();
    listed.sort_unstable();
    included.sort_unstable();
    assert!(!listed.is_empty());
    assert_eq!(listed, included);
}
