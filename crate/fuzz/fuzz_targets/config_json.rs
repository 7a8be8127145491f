#![no_main]

use corrner::calibrator::VotePolicy;
use corrner::correlator::CorrelatorConfig;
use corrner::evaluator::experiment::SweepConfig;
use corrner::retriever::IndexConfig;
use corrner::synthgen::GenConfig;
use corrner::tagger::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&kind, json)) = data.split_first() else { return };
    match kind % 6 {
        0 => {
            if let Ok(c) = serde_json::from_slice::<GenConfig>(json) {
                let _ = c.validate();
            }
        }
        1 => {
            if let Ok(c) = serde_json::from_slice::<TrainConfig>(json) {
                let _ = c.validate();
            }
        }
        2 => {
            if let Ok(c) = serde_json::from_slice::<VotePolicy>(json) {
                let _ = c.validate();
            }
        }
        3 => {
            if let Ok(c) = serde_json::from_slice::<CorrelatorConfig>(json) {
                if c.validate().is_ok() {
                    for n in [0, 1, 2, 1000] {
                        let _ = c.bin(n);
                    }
                }
            }
        }
        4 => {
            if let Ok(c) = serde_json::from_slice::<IndexConfig>(json) {
                let _ = c.params.validate();
            }
        }
        _ => {
            let _ = serde_json::from_slice::<SweepConfig>(json);
        }
    }
});
