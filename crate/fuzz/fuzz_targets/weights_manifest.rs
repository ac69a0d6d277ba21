#![no_main]

use libfuzzer_sys::fuzz_target;
use spatialemb_core::model::{parse_manifest, ChannelFusion, Topology, Variant, WeightStore};

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (head, body) = data.split_at(split);
    let Ok(text) = std::str::from_utf8(head) else { return };
    let _ = parse_manifest(text);
    let mut spec = Variant::lookup("conv2d-S").unwrap().spec(4, Topology::Fixed, ChannelFusion::None, 1, 2);
    spec.out_channels = [2, 2, 2];
    let _ = WeightStore::from_parts(text, body.get(1..).unwrap_or(&[]), &spec);
});
