use kaya_core::dbdl::{format_dbdl, parse_dbdl};
use kaya_core::minisol::{format_source, parse_source};
use kaya_testkit::{gen, rng};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn minisol_format_is_a_parse_fixpoint(seed in any::<u64>()) {
        let unit = gen::source(&mut rng(seed));
        let text = format_source(&unit);
        let parsed = parse_source(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
        prop_assert_eq!(&parsed, &unit);
        prop_assert_eq!(format_source(&parsed), text);
    }

    #[test]
    fn dbdl_format_is_a_parse_fixpoint(seed in any::<u64>()) {
        let mut r = rng(seed);
        let unit = gen::source(&mut r);
        let suite = gen::suite(&mut r, &unit.contracts);
        let text = format_dbdl(&suite);
        let parsed = parse_dbdl(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
        prop_assert_eq!(&parsed, &suite);
        prop_assert_eq!(format_dbdl(&parsed), text);
    }
}

#[test]
fn comments_and_spacing_do_not_change_the_ast() {
    let messy = "contract  C{uint256 x ; // note\n function f( uint256 a )payable{x+=a*2;}}";
    let clean = format_source(&parse_source(messy).unwrap());
    assert_eq!(parse_source(&clean).unwrap(), parse_source(messy).unwrap());
    assert!(clean.contains("function f(uint256 a) payable {"));
}
