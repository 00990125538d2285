#![no_main]

use foilscope::dialogue::Session;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Session::from_json(text) {
        let again = Session::from_json(&s.to_json()).expect("encoded sessions decode");
        assert_eq!(again, s);
        let _ = s.context();
    }
});
