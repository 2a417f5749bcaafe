//! Every invariant-breaking mutation of a valid manifest must be rejected.

use aen_core::tensor_io::parse_manifest;
use aen_core::Error;
use serde_json::{json, Value};

fn valid() -> Value {
    json!({
        "video": {"video_id": "clip", "num_frames": 64, "fps": 16.0, "snippet_len": 16, "duration_seconds": 4.0},
        "annotations": [
            {"label": "run", "start_sec": 0.5, "end_sec": 2.0},
            {"label": "jump", "start_sec": 1.0, "end_sec": 4.0}
        ],
        "snippets": [
            {"index": 0, "feature_file": "f0.aent", "agent_boxes": [[0.1, 0.1, 0.5, 0.9]]},
            {"index": 3, "agent_boxes": [[0.0, 0.0, 1.0, 1.0], [0.2, 0.3, 0.4, 0.5]]}
        ]
    })
}

fn mutate(f: impl FnOnce(&mut Value)) -> String {
    let mut v = valid();
    f(&mut v);
    v.to_string()
}

#[test]
fn valid_manifest_parses() {
    let m = parse_manifest(&valid().to_string()).unwrap();
    assert_eq!(m.annotations.len(), 2);
    assert_eq!(m.snippets[1].agent_boxes.len(), 2);
}

#[test]
fn mutations_are_rejected_with_paths() {
    let cases: Vec<(String, &str)> = vec![
        (mutate(|v| v["video"]["num_frames"] = json!(0)), "video.num_frames"),
        (mutate(|v| v["video"]["fps"] = json!(-1.0)), "video.fps"),
        (mutate(|v| v["video"]["snippet_len"] = json!(0)), "video.snippet_len"),
        (mutate(|v| v["video"]["snippet_len"] = json!(128)), "video.num_frames"),
        (mutate(|v| v["video"]["duration_seconds"] = json!(4.1)), "video.duration_seconds"),
        (mutate(|v| v["video"]["video_id"] = json!("")), "video.video_id"),
        (mutate(|v| v["annotations"][0]["start_sec"] = json!(-0.1)), "annotations[0].start_sec"),
        (mutate(|v| v["annotations"][1]["end_sec"] = json!(4.5)), "annotations[1].end_sec"),
        (mutate(|v| v["annotations"][1]["end_sec"] = json!(1.0)), "annotations[1].end_sec"),
        (mutate(|v| v["snippets"][1]["index"] = json!(4)), "snippets[1].index"),
        (mutate(|v| v["snippets"][1]["index"] = json!(0)), "snippets[1].index"),
        (mutate(|v| v["snippets"][0]["agent_boxes"][0] = json!([0.5, 0.5, 0.4, 0.9])), "snippets[0].agent_boxes[0]"),
        (mutate(|v| v["snippets"][0]["agent_boxes"][0] = json!([0.1, 0.9, 0.5, 0.9])), "snippets[0].agent_boxes[0]"),
        (mutate(|v| v["snippets"][1]["agent_boxes"][1] = json!([-0.1, 0.3, 0.4, 0.5])), "snippets[1].agent_boxes[1]"),
        (mutate(|v| v["snippets"][1]["agent_boxes"][1] = json!([0.2, 0.3, 0.4])), "snippets[1].agent_boxes[1]"),
        (mutate(|v| v["video"]["frame_rate"] = json!(3)), "video.frame_rate"),
        (mutate(|v| v["snippets"][0]["boxes"] = json!([])), "snippets[0].boxes"),
        (mutate(|v| v["extra"] = json!(1)), "extra"),
        (mutate(|v| { v.as_object_mut().unwrap().remove("annotations"); }), "."),
    ];
    for (text, path) in cases {
        match parse_manifest(&text) {
            Err(Error::Validation { path: got, .. }) => assert_eq!(got, path, "{text}"),
            other => panic!("expected rejection at {path}, got {other:?}"),
        }
    }
}
