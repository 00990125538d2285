#![no_main]

use foilscope::manifest::VocabularyManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = VocabularyManifest::parse(text) {
        let canonical = m.serialize();
        let again = VocabularyManifest::parse(&canonical).expect("canonical form parses");
        assert_eq!(again, m);
        assert_eq!(again.serialize(), canonical);
    }
});
