#![no_main]

use foilscope::env::{bundled, parse_action_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for id in ["sokoban_switch", "key_quest_s1"] {
        let w = bundled(id).unwrap().world();
        if let Ok(ids) = parse_action_list(&w, text) {
            let names = w.mnemonics(&ids);
            assert_eq!(parse_action_list(&w, &names.join("\n")).unwrap(), ids);
        }
    }
});
