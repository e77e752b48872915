#![no_main]

use issng::io::InitialGuess;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(guess) = text.parse::<InitialGuess>() {
        let shown = guess.to_string();
        assert_eq!(shown.parse::<InitialGuess>().unwrap(), guess);
    }
});
