#![no_main]

use decaf::valuenet::{load_checkpoint, save_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Anything accepted must survive a save/load round trip unchanged.
    if let Ok((net, meta)) = load_checkpoint(data) {
        let bytes = save_checkpoint(&net, &meta);
        let (net2, meta2) = load_checkpoint(&bytes).expect("re-saved checkpoint loads");
        assert_eq!(net2.config(), net.config());
        assert_eq!(net2.role(), net.role());
        assert!(net2.params().iter().zip(net.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(meta2, meta);
    }
});
