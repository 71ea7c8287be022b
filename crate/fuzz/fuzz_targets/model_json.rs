#![no_main]

use libfuzzer_sys::fuzz_target;
use tcrmdp::mdp::ParametricMdp;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mdp) = ParametricMdp::from_json_str(text) {
        assert!(mdp.validate().is_ok());
        let again = ParametricMdp::from_json_str(&mdp.to_json()).expect("re-serialized model loads");
        assert_eq!(again.n_psi(), mdp.n_psi());
    }
});
