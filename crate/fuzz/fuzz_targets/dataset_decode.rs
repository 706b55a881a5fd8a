#![no_main]

use curiolab::dataset::ObservationDataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = ObservationDataset::decode(data) {
        let bytes = ds.encode();
        let again = ObservationDataset::decode(&bytes).expect("re-encoded dataset must decode");
        assert_eq!(again.len(), ds.len());
        assert_eq!(again.encode(), bytes);
    }
});
