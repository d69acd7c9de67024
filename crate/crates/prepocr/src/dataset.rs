//! Writes synthetic clean/degraded page pairs and their manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ab_glyph::FontVec;
use prepocr_core::ocrnoise::chunk_text;
use prepocr_core::synth::{build_pair, plan_pair, DegradeOp, LevelWeights, NoiseLevel, RenderSpec, SynthError, DEFAULT_STITCH_FRACTION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("font {0}: not a usable font file")]
    Font(PathBuf),
    #[error("no fonts given")]
    NoFonts,
    #[error("corpus yields {available} pages of text but {needed} were requested")]
    CorpusExhausted { available: usize, needed: usize },
    #[error("pair {index}: {source}")]
    Synth {
        index: u64,
        #[source]
        source: SynthError,
    },
    #[error(transparent)]
    Config(SynthError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub count: u64,
    pub master_seed: u64,
    pub levels: LevelWeights,
    pub stitch_fraction: f64,
    /// Text characters per page.
    pub page_chars: usize,
    pub render: RenderSpec,
    /// Replaces the default parameter ranges of the listed levels.
    pub noise_levels: BTreeMap<u8, NoiseLevel>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 10,
            master_seed: 0,
            levels: LevelWeights::default(),
            stitch_fraction: DEFAULT_STITCH_FRACTION,
            page_chars: 800,
            render: RenderSpec::default(),
            noise_levels: BTreeMap::new(),
        }
    }
}

impl DatasetConfig {
    /// Table defaults overlaid with any configured levels.
    pub fn level_table(&self) -> BTreeMap<u8, NoiseLevel> {
        let mut table: BTreeMap<u8, NoiseLevel> = (1..=4).filter_map(|l| NoiseLevel::preset(l).map(|n| (l, n))).collect();
        table.extend(self.noise_levels.clone());
        table
    }
}

/// One line of `manifest.jsonl`. Paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: u64,
    pub id: String,
    pub clean: PathBuf,
    pub degraded: PathBuf,
    pub text: String,
    pub level: u8,
    pub levels: Vec<u8>,
    pub fonts: Vec<String>,
    pub seed: u64,
    pub stitched: bool,
    pub op_order: Vec<Vec<DegradeOp>>,
    pub binarized: Vec<bool>,
}

pub fn load_fonts(paths: &[PathBuf]) -> Result<Vec<FontVec>, DatasetError> {
    if paths.is_empty() {
        return Err(DatasetError::NoFonts);
    }
    paths
        .iter()
        .map(|p| FontVec::try_from_vec(io::read_bytes(p)?).map_err(|_| DatasetError::Font(p.clone())))
        .collect()
}

fn font_label(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Generates `config.count` pairs under `out`: `clean/NNNNNN.png`,
/// `degraded/NNNNNN.png` and `manifest.jsonl`. Pairs are built in
/// parallel; every byte depends only on the inputs and the master seed.
pub fn generate_dataset(
    corpus: &str,
    font_paths: &[PathBuf],
    config: &DatasetConfig,
    out: &Path,
) -> Result<Vec<PairRecord>, DatasetError> {
    config.levels.validate().map_err(DatasetError::Config)?;
    for level in config.levels.0.keys() {
        if !config.level_table().contains_key(level) {
            return Err(DatasetError::Config(SynthError::BadParameter("level weight names an undefined level")));
        }
    }
    let fonts = load_fonts(font_paths)?;
    let pages = chunk_text(corpus, config.page_chars.max(1));
    let needed = config.count as usize;
    if pages.len() < needed {
        return Err(DatasetError::CorpusExhausted {
            available: pages.len(),
            needed,
        });
    }
    let table = config.level_table();
    let labels: Vec<String> = font_paths.iter().map(|p| font_label(p)).collect();

    let records = (0..config.count)
        .into_par_iter()
        .map(|index| {
            let plan = plan_pair(config.master_seed, index, &config.levels, fonts.len(), config.stitch_fraction);
            let text = &pages[index as usize];
            let pair = build_pair(&plan, text, &config.render, &fonts, &table).map_err(|source| DatasetError::Synth { index, source })?;
            let id = format!("{index:06}");
            let clean = PathBuf::from("clean").join(format!("{id}.png"));
            let degraded = PathBuf::from("degraded").join(format!("{id}.png"));
            io::write_png(&out.join(&clean), &pair.clean)?;
            io::write_png(&out.join(&degraded), &pair.degraded)?;
            Ok(PairRecord {
                index,
                id,
                clean,
                degraded,
                text: pair.text,
                level: pair.level,
                levels: pair.levels,
                fonts: pair.fonts.iter().map(|&f| labels[f].clone()).collect(),
                seed: pair.seed,
                stitched: pair.stitched,
                op_order: pair.op_order,
                binarized: pair.binarized,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    io::write_jsonl(&out.join("manifest.jsonl"), &records)?;
    Ok(records)
}
