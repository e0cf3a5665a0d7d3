//! Shared fixtures for integration tests.

use std::path::Path;

use serde_json::json;
use vqa_core::dataset::{Dataset, QuestionRecord, VideoMeta};

/// A labeled synthetic dataset: `n_videos` videos, `per_video` questions
/// each, labels cycling 0,1,2.
pub fn synthetic_dataset(n_videos: usize, per_video: usize, labeled: bool) -> Dataset {
    let mut videos = Vec::new();
    let mut records = Vec::new();
    for v in 0..n_videos {
        let video_id = format!("v{v:04}");
        videos.push(VideoMeta {
            video_id: video_id.clone(),
            duration_s: 8.0 + (v % 50) as f64,
            width: 1920,
            height: 1080,
            source: format!("clips/{video_id}.mp4"),
        });
        for q in 0..per_video {
            records.push(QuestionRecord {
                question_uid: format!("{video_id}-q{q}"),
                video_id: video_id.clone(),
                question: format!("what happens in clip {v} scene {q}?"),
                options: [
                    format!("salt-{v}-{q}"),
                    format!("pepper-{v}-{q}"),
                    format!("thyme-{v}-{q}"),
                ],
                answer_index: labeled.then(|| ((v * 7 + q) % 3) as u8),
            });
        }
    }
    Dataset::new(records, videos).unwrap()
}

/// Write a dataset to disk in the harness annotation schema.
pub fn write_dataset(ds: &Dataset, path: &Path) {
    let videos: serde_json::Map<String, serde_json::Value> = ds
        .videos()
        .iter()
        .map(|(id, v)| {
            (
                id.clone(),
                json!({
                    "duration_s": v.duration_s,
                    "width": v.width,
                    "height": v.height,
                    "source": v.source,
                }),
            )
        })
        .collect();
    let questions: Vec<serde_json::Value> = ds
        .records()
        .iter()
        .map(|r| {
            let mut q = json!({
                "question_uid": r.question_uid,
                "video_id": r.video_id,
                "question": r.question,
                "options": r.options,
            });
            if let Some(a) = r.answer_index {
                q["answer_index"] = json!(a);
            }
            q
        })
        .collect();
    let doc = json!({"videos": videos, "questions": questions});
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
}
