use std::collections::BTreeSet;

use trailerness::features::synth::{noise_frame, SynthConfig, SyntheticEpisode};
use trailerness::hashmatch::frames::{
    frame_stem, read_frame, read_frames, read_label_runs, write_label_runs, write_pgm,
};
use trailerness::hashmatch::{
    compute_dhash, label_frames, min_distance_table, min_distance_table_mih, FrameHash, GrayFrame,
};
use trailerness::timeline::{aggregate_labels, aggregate_shot_labels};
use trailerness::{Error, Scale};

// Pinned against an exact-rational reference implementation of the hash.
#[test]
fn golden_hashes_of_noise_frames() {
    let h = compute_dhash(&noise_frame(64, 64, 42).unwrap()).unwrap();
    assert_eq!(h, FrameHash(0x25ea_ede9_5493_ab0f));
    let h = compute_dhash(&noise_frame(50, 37, 7).unwrap()).unwrap();
    assert_eq!(h, FrameHash(0xaea7_b35b_9512_b18a));
}

#[test]
fn labels_from_frame_directories_match_planted_segments() {
    let config = SynthConfig {
        n_frames: 900,
        n_shots: 9,
        trailer_fraction: 0.1,
        align_to_clips: false,
        ..SynthConfig::default()
    };
    let ep = SyntheticEpisode::generate(&config, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, n, trailer) in [("ep", ep.frame_count(), false), ("tr", ep.trailer_len(), true)] {
        let sub = dir.path().join(name);
        std::fs::create_dir(&sub).unwrap();
        for i in 0..n {
            let f = if trailer {
                ep.render_trailer_frame(i)
            } else {
                ep.render_frame(i)
            };
            write_pgm(&sub.join(format!("{}.pgm", frame_stem(i))), &f).unwrap();
        }
    }
    let hash = |name: &str| -> Vec<FrameHash> {
        read_frames(&dir.path().join(name))
            .unwrap()
            .iter()
            .map(|f| compute_dhash(f).unwrap())
            .collect()
    };
    let (episode, trailer) = (hash("ep"), hash("tr"));
    assert_eq!(
        min_distance_table(&episode, &trailer).unwrap().as_slice()[..10],
        min_distance_table_mih(&episode, &trailer, 64).unwrap().as_slice()[..10]
    );
    let labels = label_frames(&min_distance_table_mih(&episode, &trailer, 10).unwrap(), 10).unwrap();
    assert_eq!(labels, ep.frame_labels);

    let path = dir.path().join("labels.jsonl");
    write_label_runs(&path, &labels).unwrap();
    assert_eq!(read_label_runs(&path).unwrap(), labels);

    let clips = aggregate_labels(&labels, &ep.timeline.clip_bounds, Scale::Clip).unwrap();
    assert_eq!(clips, ep.clip_labels);
    assert_eq!(aggregate_shot_labels(&labels, &ep.timeline).unwrap(), ep.shot_labels);
    let positives: BTreeSet<usize> = ep.planted_frames().into_iter().collect();
    assert_eq!(labels.positives(), positives.len());
}

#[test]
fn png_frames_are_read_as_luma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame_00000000.png");
    let (w, h) = (12u32, 10u32);
    let rgb: Vec<u8> = (0..w * h).flat_map(|i| [(i % 256) as u8, 200, 10]).collect();
    {
        let file = std::fs::File::create(&path).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w, h);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(&rgb).unwrap();
    }
    let frame = read_frame(&path).unwrap();
    let expected: Vec<u8> = rgb
        .chunks(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
        .collect();
    assert_eq!(frame, GrayFrame::new(12, 10, expected).unwrap());
}

#[test]
fn missing_frame_directory_is_a_missing_artifact() {
    let err = read_frames(std::path::Path::new("/nonexistent/frames")).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact { .. }));
    assert_eq!(err.exit_code(), 4);
}
