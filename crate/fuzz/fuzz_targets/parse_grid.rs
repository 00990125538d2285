#![no_main]

use foilscope::env::GridWorld;
use foilscope::model::BlackBoxModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = GridWorld::parse(text) {
        let s = w.initial_state();
        let _ = w.render(&s);
        for a in w.actions() {
            let _ = w.simulate(&s, a);
        }
        let _ = w.vocabulary().evaluate(&s);
    }
});
