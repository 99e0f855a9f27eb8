//! Dataset layout discovery.
//!
//! ```text
//! root/
//!   seq000/
//!     frame_00.ppm  frame_00.dmap.pgm   [frame_00.right.ppm]
//!     ...
//!     frame_10.ppm  frame_10.dmap.pgm   [frame_10.gt.pgm]
//!   seq001/
//! ```
//!
//! `frame_10` is the annotated test frame; `frame_00..frame_09` are its preceding frames,
//! oldest first.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const PRECEDING_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePaths {
    pub index: usize,
    pub color: PathBuf,
    pub disparity: PathBuf,
    /// Right view, when the dataset ships one.
    pub right: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    /// Numeric part of the directory name (`seq007` -> 7).
    pub id: u32,
    pub dir: PathBuf,
    pub annotated: FramePaths,
    /// Exactly [`PRECEDING_FRAMES`] entries, oldest first.
    pub preceding: Vec<FramePaths>,
    pub manual_mask: Option<PathBuf>,
}

impl Sequence {
    pub fn name(&self) -> String {
        format!("seq{:03}", self.id)
    }

    /// Preceding frames followed by the annotated frame.
    pub fn all_frames(&self) -> impl Iterator<Item = &FramePaths> {
        self.preceding.iter().chain(std::iter::once(&self.annotated))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceWarning {
    pub dir: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceSet {
    pub sequences: Vec<Sequence>,
    pub warnings: Vec<SequenceWarning>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

fn parse_seq_id(name: &str) -> Option<u32> {
    let digits = name.strip_prefix("seq")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn frame_paths(dir: &Path, index: usize) -> std::result::Result<FramePaths, String> {
    let color = dir.join(format!("frame_{index:02}.ppm"));
    let disparity = dir.join(format!("frame_{index:02}.dmap.pgm"));
    let right = dir.join(format!("frame_{index:02}.right.ppm"));
    for p in [&color, &disparity] {
        if !p.is_file() {
            return Err(format!("missing {}", p.file_name().unwrap().to_string_lossy()));
        }
    }
    Ok(FramePaths {
        index,
        color,
        disparity,
        right: right.is_file().then_some(right),
    })
}

fn load_sequence(id: u32, dir: PathBuf) -> std::result::Result<Sequence, String> {
    let preceding = (0..PRECEDING_FRAMES)
        .map(|i| frame_paths(&dir, i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let annotated = frame_paths(&dir, PRECEDING_FRAMES)?;
    let gt = dir.join(format!("frame_{PRECEDING_FRAMES:02}.gt.pgm"));
    Ok(Sequence {
        id,
        manual_mask: gt.is_file().then_some(gt),
        dir,
        annotated,
        preceding,
    })
}

/// Finds every complete `seqNNN` directory under `root`, ordered by `NNN`.
///
/// Incomplete sequences are skipped and reported in [`SequenceSet::warnings`].
pub fn discover_sequences(root: impl AsRef<Path>) -> Result<SequenceSet> {
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut candidates = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = parse_seq_id(&name) {
            candidates.push((id, name, entry.path()));
        }
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut set = SequenceSet::default();
    for (id, _, dir) in candidates {
        match load_sequence(id, dir.clone()) {
            Ok(seq) => set.sequences.push(seq),
            Err(message) => set.warnings.push(SequenceWarning { dir, message }),
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_seq(root: &Path, name: &str, skip: Option<&str>) {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..=PRECEDING_FRAMES {
            for suffix in ["ppm", "dmap.pgm"] {
                let file = format!("frame_{i:02}.{suffix}");
                if Some(file.as_str()) != skip {
                    std::fs::write(dir.join(file), b"").unwrap();
                }
            }
        }
    }

    #[test]
    fn complete_sequences_in_order() {
        let root = tempfile::tempdir().unwrap();
        for name in ["seq002", "seq000", "seq001"] {
            make_seq(root.path(), name, None);
        }
        let set = discover_sequences(root.path()).unwrap();
        let ids: Vec<u32> = set.sequences.iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(set.warnings.is_empty());
        for s in &set.sequences {
            assert_eq!(s.preceding.len(), PRECEDING_FRAMES);
            assert_eq!(s.annotated.index, 10);
            assert!(s.manual_mask.is_none());
        }
    }

    #[test]
    fn missing_frame_skipped_with_warning() {
        let root = tempfile::tempdir().unwrap();
        make_seq(root.path(), "seq000", None);
        make_seq(root.path(), "seq001", Some("frame_03.ppm"));
        make_seq(root.path(), "seq002", None);
        let set = discover_sequences(root.path()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.warnings.len(), 1);
        assert!(set.warnings[0].message.contains("frame_03.ppm"));
    }

    #[test]
    fn empty_root() {
        let root = tempfile::tempdir().unwrap();
        let set = discover_sequences(root.path()).unwrap();
        assert!(set.is_empty());
        assert!(set.warnings.is_empty());
    }

    #[test]
    fn ignores_unrelated_dirs_and_picks_up_gt() {
        let root = tempfile::tempdir().unwrap();
        make_seq(root.path(), "seq010", None);
        std::fs::create_dir(root.path().join("notes")).unwrap();
        std::fs::create_dir(root.path().join("seqx")).unwrap();
        std::fs::write(root.path().join("seq010/frame_10.gt.pgm"), b"").unwrap();
        let set = discover_sequences(root.path()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.sequences[0].name(), "seq010");
        assert!(set.sequences[0].manual_mask.is_some());
    }
}
