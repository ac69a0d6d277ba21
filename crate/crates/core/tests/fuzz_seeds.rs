//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets drive, pinning the expected verdict for each seed.

use std::io::Cursor;
use std::path::PathBuf;

use spatialemb_core::model::{parse_manifest, ChannelFusion, Topology, Variant, WeightStore};
use spatialemb_core::runconfig::RawConfig;
use spatialemb_core::sim::SceneSpec;
use spatialemb_core::{sef, wav};

fn seed(target: &str, name: &str) -> Vec<u8> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target).join(name);
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn text(target: &str, name: &str) -> String {
    String::from_utf8(seed(target, name)).unwrap()
}

#[test]
fn sef_seeds() {
    for (name, ok) in [
        ("small.sef", true),
        ("nan.sef", true),
        ("truncated.sef", false),
        ("header_only.sef", false),
        ("huge_dims.sef", false),
        ("bad_magic.sef", false),
    ] {
        let r = sef::decode(&seed("sef_decode", name));
        assert_eq!(r.is_ok(), ok, "{name}: {r:?}");
    }
}

#[test]
fn wav_seeds() {
    for (name, ok) in [("pcm16.wav", true), ("float32.wav", true), ("eight_ch_8k.wav", false), ("truncated.wav", false)] {
        let r = wav::decode(Cursor::new(seed("wav_decode", name)), None);
        assert_eq!(r.is_ok(), ok, "{name}: {r:?}");
    }
    let e = wav::decode(Cursor::new(seed("wav_decode", "eight_ch_8k.wav")), None).unwrap_err();
    assert_eq!(e.class(), "SampleRateMismatch");
}

#[test]
fn scene_seeds() {
    assert!(SceneSpec::from_toml(&text("scene_config", "tones.toml")).is_ok());
    assert!(SceneSpec::from_toml(&text("scene_config", "noise.toml")).is_ok());
    let e = SceneSpec::from_toml(&text("scene_config", "no_target.toml")).unwrap_err();
    assert_eq!(e.class(), "BadScene");
}

#[test]
fn run_config_seeds() {
    for name in ["default.toml", "full.toml", "squeezed.toml"] {
        let cfg = RawConfig::from_toml(&text("run_config", name)).unwrap().resolve();
        assert!(cfg.is_ok(), "{name}: {cfg:?}");
    }
    let e = RawConfig::from_toml(&text("run_config", "bad_combo.toml")).unwrap().resolve().unwrap_err();
    assert!(e.is_usage());
}

#[test]
fn manifest_seeds() {
    assert!(parse_manifest(&text("weights_manifest", "manifest_only.txt")).is_ok());
    assert!(parse_manifest(&text("weights_manifest", "no_seed.txt")).is_err());
    assert!(parse_manifest(&text("weights_manifest", "overflow.txt")).is_err());

    let bytes = seed("weights_manifest", "valid.bin");
    let split = bytes.iter().position(|&b| b == 0).unwrap();
    let manifest = std::str::from_utf8(&bytes[..split]).unwrap();
    let mut spec = Variant::lookup("conv2d-S").unwrap().spec(4, Topology::Fixed, ChannelFusion::None, 1, 2);
    spec.out_channels = [2, 2, 2];
    let w = WeightStore::from_parts(manifest, &bytes[split + 1..], &spec).unwrap();
    assert_eq!(w.seed(), 1);
}
