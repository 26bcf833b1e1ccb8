#![no_main]

use koopman_clf::formats::{read_dataset_csv, DatasetMeta};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let meta = DatasetMeta::parse("plant = pendulum\nperiod = 0.005\nseed = 0\nn_snapshots = 4\n").unwrap();
    let _ = read_dataset_csv(data, &meta);
});
