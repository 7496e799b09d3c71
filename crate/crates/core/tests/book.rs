//! Every chapter listed in the book's summary must be compiled as a doctest.

#[test]
fn every_chapter_is_doctested() {
    let summary = include_str!("../../../book/src/SUMMARY.md");
    let lib = include_str!("../src/lib.rs");
    let chapters: Vec<&str> = summary
        .lines()
        .filter_map(|l| l.split("](").nth(1))
        .map(|rest| rest.trim_end_matches(')'))
        .collect();
    assert!(chapters.len() >= 9, "{chapters:?}");
    for chapter in chapters {
        let include = format!("include_str!(\"../../../book/src/{chapter}\")");
        assert!(lib.contains(&include), "{chapter} is not included in lib.rs");
    }
}
