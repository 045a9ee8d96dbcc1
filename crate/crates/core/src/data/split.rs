use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ObservationWindow;
use crate::error::{Error, Result};

/// The five ETH/UCY sub-scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EthUcyScene {
    Eth,
    Hotel,
    Univ,
    Zara1,
    Zara2,
}

impl EthUcyScene {
    pub const ALL: [EthUcyScene; 5] =
        [EthUcyScene::Eth, EthUcyScene::Hotel, EthUcyScene::Univ, EthUcyScene::Zara1, EthUcyScene::Zara2];

    pub fn name(self) -> &'static str {
        match self {
            EthUcyScene::Eth => "eth",
            EthUcyScene::Hotel => "hotel",
            EthUcyScene::Univ => "univ",
            EthUcyScene::Zara1 => "zara1",
            EthUcyScene::Zara2 => "zara2",
        }
    }

    /// Column title used in result tables.
    pub fn title(self) -> &'static str {
        match self {
            EthUcyScene::Eth => "ETH",
            EthUcyScene::Hotel => "Hotel",
            EthUcyScene::Univ => "Univ",
            EthUcyScene::Zara1 => "Zara1",
            EthUcyScene::Zara2 => "Zara2",
        }
    }
}

impl fmt::Display for EthUcyScene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EthUcyScene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EthUcyScene::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScene {
                name: s.to_string(),
                expected: "eth, hotel, univ, zara1, zara2".into(),
            })
    }
}

/// Train on every scene except `held_out`, test on `held_out`.
///
/// `dataset` maps scene name to that scene's windows.
pub fn leave_one_out_split(
    dataset: &BTreeMap<String, Vec<ObservationWindow>>,
    held_out: &str,
) -> Result<(Vec<ObservationWindow>, Vec<ObservationWindow>)> {
    let held: EthUcyScene = held_out.parse()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (name, windows) in dataset {
        let scene: EthUcyScene = name.parse()?;
        if scene == held {
            test.extend(windows.iter().cloned());
        } else {
            train.extend(windows.iter().cloned());
        }
    }
    Ok((train, test))
}

/// Test scenes of the TrajNet SDD split used by PECNet, Y-net and most
/// trajectory-only SDD benchmarks; every other video is training data.
pub const SDD_TEST_SCENES: [&str; 17] = [
    "coupa_0", "coupa_1", "gates_2", "hyang_0", "hyang_1", "hyang_3", "hyang_8", "little_0", "little_1",
    "little_2", "little_3", "nexus_5", "nexus_6", "quad_0", "quad_1", "quad_2", "quad_3",
];

pub fn sdd_split(
    dataset: &BTreeMap<String, Vec<ObservationWindow>>,
) -> (Vec<ObservationWindow>, Vec<ObservationWindow>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (name, windows) in dataset {
        if SDD_TEST_SCENES.contains(&name.as_str()) {
            test.extend(windows.iter().cloned());
        } else {
            train.extend(windows.iter().cloned());
        }
    }
    (train, test)
}

/// Hold out the latest `fraction` of each scene's windows (by anchor frame)
/// as a contiguous time block for model selection.
pub fn validation_split(
    windows: &[ObservationWindow],
    fraction: f64,
) -> (Vec<ObservationWindow>, Vec<ObservationWindow>) {
    if fraction <= 0.0 {
        return (windows.to_vec(), Vec::new());
    }
    let mut by_scene: BTreeMap<&str, Vec<&ObservationWindow>> = BTreeMap::new();
    for w in windows {
        by_scene.entry(&w.scene).or_default().push(w);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut ws) in by_scene {
        ws.sort_by_key(|w| (w.anchor_frame, w.agent_id));
        let n_val = ((ws.len() as f64) * fraction).ceil() as usize;
        let cut = ws.len().saturating_sub(n_val.min(ws.len()));
        train.extend(ws[..cut].iter().map(|w| (*w).clone()));
        val.extend(ws[cut..].iter().map(|w| (*w).clone()));
    }
    (train, val)
}
