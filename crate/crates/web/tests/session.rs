use tinyt_web::{sample_document, Session};

#[test]
fn sample_builds_and_answers_queries() {
    let xml = sample_document(0.2, 1);
    let s = Session::build(&xml, 4).unwrap();
    let with = s.count("//listitem//keyword", true).unwrap();
    let without = s.count("//listitem//keyword", false).unwrap();
    let n = |j: &str| j.split("\"count\":").nth(1).unwrap().split(',').next().unwrap().to_string();
    assert_eq!(n(&with), n(&without));
    assert_eq!(n(&s.count("/site/regions", true).unwrap()), "1");
    assert!(s.stats().contains("\"rules\":"));
    assert!(s.grammar_text(5).lines().count() <= 6);
}

#[test]
fn serialize_limits_output() {
    let s = Session::build("<r><k>a</k><k>b</k><k>c</k></r>", 2).unwrap();
    assert_eq!(s.serialize("//k", 2).unwrap(), "<k>a</k>\n<k>b</k>\n... 1 more\n");
    assert_eq!(s.serialize("/r/k/text()", 5).unwrap(), "a\nb\nc\n");
}

#[test]
fn bad_input_is_reported() {
    assert!(Session::build("<a><b></a>", 4).is_err());
    let s = Session::build("<a/>", 4).unwrap();
    assert!(s.count("//a[1]", true).is_err());
}
