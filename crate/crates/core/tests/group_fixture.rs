//! Pins the group listings against the checked-in fixture. Set
//! `RBT_REGEN_FIXTURES=1` to rewrite it after an intentional change.

use std::path::PathBuf;

use rbt_core::clifford::GroupFixture;

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/groups.json")
}

#[test]
fn groups_match_fixture() {
    let current = GroupFixture::current();
    let path = fixture_path();
    if std::env::var_os("RBT_REGEN_FIXTURES").is_some() {
        let text = serde_json::to_string_pretty(&current).unwrap();
        std::fs::write(&path, text + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).expect("fixture present");
    let pinned: GroupFixture = serde_json::from_str(&text).unwrap();
    assert_eq!(pinned.a4.len(), 12);
    assert_eq!(pinned.clifford24.len(), 24);
    assert_eq!(pinned.a4_table_checksum, current.a4_table_checksum);
    assert_eq!(pinned.clifford24_table_checksum, current.clifford24_table_checksum);
    for (a, b) in pinned.a4.iter().zip(&current.a4) {
        assert!(a.max_abs_diff(b) < 1e-12);
    }
    for (a, b) in pinned.clifford24.iter().zip(&current.clifford24) {
        assert!(a.max_abs_diff(b) < 1e-12);
    }
}
