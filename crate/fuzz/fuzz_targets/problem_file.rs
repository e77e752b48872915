#![no_main]

use issng::io::{parse_problem, ProblemFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(inst) = parse_problem(text) {
        // anything accepted must survive a write/read cycle
        let file = ProblemFile::from_instance(&inst).unwrap();
        let again = file.to_instance().unwrap();
        assert_eq!(again.grid(), inst.grid());
        assert_eq!(again.f(), inst.f());
        assert_eq!(again.yd(), inst.yd());
    }
});
