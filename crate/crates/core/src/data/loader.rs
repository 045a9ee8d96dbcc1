//! Directory layouts for the two benchmark families.
//!
//! ETH/UCY: `<root>/<scene>/**/*.txt` or `<root>/<scene>.txt` for each of
//! `eth hotel univ zara1 zara2`; raw file names (`biwi_eth.txt`,
//! `students001.txt`, `crowds_zara01.txt`, ...) directly under `<root>` are
//! also recognized. SDD: `<root>/<scene>/video<N>/annotations.txt`, scene
//! name `<scene>_<N>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{build_windows, parse_ethucy, parse_sdd, EthUcyScene, ObservationWindow, WindowParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Ethucy,
    Sdd,
}

/// Windows grouped by scene, plus a digest of every file they came from.
#[derive(Clone, Debug, Default)]
pub struct SceneWindows {
    pub scenes: BTreeMap<String, Vec<ObservationWindow>>,
    pub data_hash: String,
    pub files: Vec<PathBuf>,
}

impl SceneWindows {
    pub fn total(&self) -> usize {
        self.scenes.values().map(Vec::len).sum()
    }
}

fn raw_file_scene(stem: &str) -> Option<EthUcyScene> {
    match stem {
        "biwi_eth" | "seq_eth" => Some(EthUcyScene::Eth),
        "biwi_hotel" | "seq_hotel" => Some(EthUcyScene::Hotel),
        "students001" | "students003" | "uni_examples" => Some(EthUcyScene::Univ),
        "crowds_zara01" => Some(EthUcyScene::Zara1),
        "crowds_zara02" => Some(EthUcyScene::Zara2),
        _ => None,
    }
}

fn txt_files_under(dir: &Path, name: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name().to_string_lossy() == name)
        .map(|e| e.into_path())
        .collect();
    files.sort();
    files
}

fn ethucy_files(root: &Path) -> Result<BTreeMap<EthUcyScene, Vec<PathBuf>>> {
    if !root.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("data directory {} does not exist", root.display()),
        )));
    }
    let mut out: BTreeMap<EthUcyScene, Vec<PathBuf>> = BTreeMap::new();
    for scene in EthUcyScene::ALL {
        let dir = root.join(scene.name());
        let file = root.join(format!("{}.txt", scene.name()));
        let mut files = Vec::new();
        if dir.is_dir() {
            files = WalkDir::new(&dir)
                .sort_by_file_name()
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "txt"))
                .map(|e| e.into_path())
                .collect();
        } else if file.is_file() {
            files.push(file);
        }
        if !files.is_empty() {
            out.insert(scene, files);
        }
    }
    if out.is_empty() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for path in entries {
            let stem = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
            if let Some(scene) = raw_file_scene(&stem) {
                out.entry(scene).or_default().push(path);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no ETH/UCY annotation files under {}", root.display())));
    }
    Ok(out)
}

/// Parse and window every ETH/UCY scene found under `root`.
pub fn load_ethucy(root: &Path, params: &WindowParams) -> Result<SceneWindows> {
    let mut result = SceneWindows::default();
    let mut digest = Sha256::new();
    for (scene, files) in ethucy_files(root)? {
        let mut windows = Vec::new();
        for path in files {
            let text = std::fs::read_to_string(&path)?;
            digest.update(path.file_name().unwrap().to_string_lossy().as_bytes());
            digest.update(text.as_bytes());
            let tracks = parse_ethucy(&text).map_err(|e| with_path(e, &path))?;
            windows.extend(build_windows(scene.name(), &tracks, params));
            result.files.push(path);
        }
        result.scenes.insert(scene.name().to_string(), windows);
    }
    result.data_hash = hex::encode(digest.finalize());
    Ok(result)
}

/// Parse and window every SDD video found under `root`.
pub fn load_sdd(root: &Path, params: &WindowParams) -> Result<SceneWindows> {
    if !root.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("data directory {} does not exist", root.display()),
        )));
    }
    let mut result = SceneWindows::default();
    let mut digest = Sha256::new();
    for path in txt_files_under(root, "annotations.txt") {
        let video_dir = path.parent().unwrap();
        let video = video_dir.file_name().unwrap().to_string_lossy().to_string();
        let scene = video_dir
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let idx = video.trim_start_matches("video");
        let name = format!("{scene}_{idx}");
        let text = std::fs::read_to_string(&path)?;
        digest.update(name.as_bytes());
        digest.update(text.as_bytes());
        let tracks = parse_sdd(&text).map_err(|e| with_path(e, &path))?;
        result.scenes.entry(name.clone()).or_default().extend(build_windows(&name, &tracks, params));
        result.files.push(path);
    }
    if result.files.is_empty() {
        return Err(Error::Empty(format!("no annotations.txt under {}", root.display())));
    }
    result.data_hash = hex::encode(digest.finalize());
    Ok(result)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message } => Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        },
        Error::DuplicateEntry { line, frame, agent } => Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: duplicate entry for frame {frame}, agent {agent}"),
        },
        other => other,
    }
}
