use std::path::Path;

use micshift::RunConfig;

/// Three classes, three devices and two-epoch models: a full pipeline in
/// well under a minute.
pub fn tiny_config(out: &Path) -> RunConfig {
    let mut c: RunConfig = serde_json::from_value(serde_json::json!({
        "seed": 11,
        "corpus": {"n_events": 60, "duration_s": 1.5},
        "mc": {"epochs": 2, "checkpoint_every": 1, "batch_size": 4, "patch_frames": 16,
               "generator": {"base_channels": 4, "n_resblocks": 1}, "discriminator": {"base_channels": 4}},
        "sec": {"epochs": 6, "batch_size": 16, "lr": 0.003,
                "classifier": {"base_channels": 4, "n_stages": 2, "blocks_per_stage": 1, "stem_stride": 2, "n_classes": 3}},
        "conditions": [{"kind": "baseline"}, {"kind": "mc_gen", "mc_epoch": 1},
                       {"kind": "mc_adapt", "target": "t1_bright", "p": 0.5, "mc_epoch": 2}, {"kind": "real"}]
    }))
    .expect("tiny config parses");
    c.classes.truncate(3);
    c.devices
        .retain(|d| ["source", "t1_bright", "t3_thin"].contains(&d.name.as_str()));
    c.out_dir = out.to_path_buf();
    c.validate().expect("tiny config is valid");
    c
}
