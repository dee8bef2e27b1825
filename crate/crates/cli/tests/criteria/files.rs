//! Criterion 11: sequence files survive a write → read → write round trip
//! bit for bit, and damaged files — truncated anywhere, flipped in the
//! structural regions, or extended with trailing garbage — are rejected
//! with a format error instead of a panic or silently wrong data.

use std::fs;
use std::path::PathBuf;

use pcst::formats::{read_sequence, write_sequence};
use pcst_core::synth::{generate, SceneSpec};

/// Deterministic 64-bit mixer for mutation choices.
struct Mixer(u64);

impl Mixer {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

fn scratch() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pcst-acceptance-files-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).expect("clear scratch directory");
    }
    fs::create_dir_all(&dir).expect("create scratch directory");
    dir
}

pub fn c11_format_robustness() {
    // An occluded scene exercises mixed visibility bits (and their padding);
    // 7 frames keeps the count table an odd, non-round size.
    let scene = SceneSpec {
        seed: 0x11,
        frames: 7,
        points_per_frame: 32,
        background_points: 8,
        bodies: 1,
        body_size: (0.2, 0.4),
        linear_speed: (0.02, 0.05),
        angular_speed: (0.02, 0.06),
        sheet: false,
        occluder: true,
        trajectories: 20,
        ..SceneSpec::default()
    };
    let record = generate::<f32>(&scene).expect("record");
    assert!(
        (0..record.num_frames())
            .any(|t| (0..record.num_trajectories()).any(|i| !record.visible(t, i))),
        "the occluded scene should hide at least one trajectory point"
    );

    let dir = scratch();
    let original = dir.join("round-trip.pcs");
    write_sequence(&original, &record).expect("write sequence");
    let bytes = fs::read(&original).expect("read bytes back");

    // Round trip: the decoded record equals the source, and re-encoding it
    // reproduces the file bit for bit.
    let decoded = read_sequence(&original).expect("read sequence");
    assert_eq!(decoded, record, "decoded record differs from the original");
    let rewritten = dir.join("re-encoded.pcs");
    write_sequence(&rewritten, &decoded).expect("re-write sequence");
    assert_eq!(
        fs::read(&rewritten).expect("read re-encoded bytes"),
        bytes,
        "re-encoding a decoded record must reproduce the file exactly"
    );

    // Structural bytes: the fixed header (magic, version, flags, frame and
    // trajectory counts) plus the per-frame count table, and the four-byte
    // metadata length suffix at the very end. Flips inside the JSON text
    // itself are excluded: changing one digit of a coordinate can still
    // parse, which is corruption no self-describing container can detect.
    let table_end = 16 + 4 * record.num_frames();
    let mut structural: Vec<usize> = (0..table_end).collect();
    structural.extend(bytes.len() - 4..bytes.len());

    let mut mixer = Mixer(0xF11E);
    let mutated_path = dir.join("mutated.pcs");
    for case in 0..50 {
        let mut damaged = bytes.clone();
        let what = match case % 5 {
            // Truncation at an arbitrary strictly shorter length.
            0 | 3 => {
                let len = mixer.below(bytes.len());
                damaged.truncate(len);
                format!("truncated to {len} bytes")
            }
            // A corrupted structural byte.
            1 | 2 => {
                let at = structural[mixer.below(structural.len())];
                let flip = 1 + (mixer.next() % 255) as u8;
                damaged[at] ^= flip;
                format!("byte {at} flipped by {flip:#04x}")
            }
            // Trailing garbage after the length suffix.
            _ => {
                let extra = 1 + mixer.below(16);
                for _ in 0..extra {
                    damaged.push(mixer.next() as u8);
                }
                format!("{extra} garbage bytes appended")
            }
        };

        fs::write(&mutated_path, &damaged).expect("write mutated file");
        match read_sequence(&mutated_path) {
            Err(e) => {
                let text = format!("{e}");
                assert!(!text.is_empty(), "case {case} ({what}): empty error message");
            }
            Ok(_) => panic!("case {case} ({what}) was accepted instead of rejected"),
        }
    }

    fs::remove_dir_all(&dir).ok();
}
