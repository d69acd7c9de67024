//! Patch restorers selectable by name, including an external-process
//! adapter for model-backed restorers.

use std::fmt;
use std::path::Path;
use std::process::Command;
use std::str::FromStr;

use prepocr_core::patch::{BuiltinRestorer, PatchRestorer, RestoreError};
use prepocr_core::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io;

/// Restorer named in configs and on the command line.
///
/// `identity`, `otsu` and `median3` are built in. `exec:<template>` runs a
/// shell command once per pass: `{in}` is replaced by a directory holding
/// the pass's patches as `000000.png`, `000001.png`, ... and `{out}` by an
/// empty directory where the command must write restored patches under the
/// same names. `{index}` is replaced by a file listing the patch names in
/// order, one per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RestorerSpec {
    Builtin(BuiltinRestorer),
    Exec(String),
}

impl FromStr for RestorerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            if cmd.trim().is_empty() {
                return Err("exec restorer needs a command".into());
            }
            return Ok(RestorerSpec::Exec(cmd.to_string()));
        }
        match s {
            "identity" => Ok(RestorerSpec::Builtin(BuiltinRestorer::Identity)),
            "otsu" | "otsu-binarize" => Ok(RestorerSpec::Builtin(BuiltinRestorer::OtsuBinarize)),
            "median3" | "median3x3" => Ok(RestorerSpec::Builtin(BuiltinRestorer::Median3x3)),
            other => Err(format!("unknown restorer `{other}` (identity, otsu, median3, exec:<command>)")),
        }
    }
}

impl TryFrom<String> for RestorerSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RestorerSpec> for String {
    fn from(r: RestorerSpec) -> String {
        r.to_string()
    }
}

impl fmt::Display for RestorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RestorerSpec::Builtin(BuiltinRestorer::Identity) => f.write_str("identity"),
            RestorerSpec::Builtin(BuiltinRestorer::OtsuBinarize) => f.write_str("otsu"),
            RestorerSpec::Builtin(BuiltinRestorer::Median3x3) => f.write_str("median3"),
            RestorerSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}

impl RestorerSpec {
    pub fn build(&self) -> Restorer {
        match self {
            RestorerSpec::Builtin(b) => Restorer::Builtin(*b),
            RestorerSpec::Exec(cmd) => Restorer::Exec(ExecRestorer { template: cmd.clone() }),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Restorer {
    Builtin(BuiltinRestorer),
    Exec(ExecRestorer),
}

impl PatchRestorer for Restorer {
    fn restore_batch(&self, patches: &[GrayImage]) -> Result<Vec<GrayImage>, RestoreError> {
        match self {
            // Patches are independent; collect keeps input order.
            Restorer::Builtin(b) => Ok(patches.par_iter().map(|p| b.restore(p)).collect()),
            Restorer::Exec(e) => e.restore_batch(patches),
        }
    }

    fn is_deterministic(&self) -> bool {
        matches!(self, Restorer::Builtin(_))
    }
}

#[derive(Debug, Clone)]
pub struct ExecRestorer {
    pub template: String,
}

fn shell_quote(path: &Path) -> String {
    let s = path.to_string_lossy();
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn patch_name(i: usize) -> String {
    format!("{i:06}.png")
}

impl PatchRestorer for ExecRestorer {
    fn restore_batch(&self, patches: &[GrayImage]) -> Result<Vec<GrayImage>, RestoreError> {
        let fail = |e: &dyn fmt::Display| RestoreError::Failed(e.to_string());
        let dir = tempfile::tempdir().map_err(|e| fail(&e))?;
        let input = dir.path().join("in");
        let output = dir.path().join("out");
        std::fs::create_dir_all(&input).map_err(|e| fail(&e))?;
        std::fs::create_dir_all(&output).map_err(|e| fail(&e))?;
        let mut listing = String::new();
        for (i, p) in patches.iter().enumerate() {
            io::write_png(&input.join(patch_name(i)), p).map_err(|e| fail(&e))?;
            listing.push_str(&patch_name(i));
            listing.push('\n');
        }
        let index = dir.path().join("index.txt");
        io::write_text(&index, &listing).map_err(|e| fail(&e))?;
        let cmd = self
            .template
            .replace("{in}", &shell_quote(&input))
            .replace("{out}", &shell_quote(&output))
            .replace("{index}", &shell_quote(&index));
        let result = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| fail(&e))?;
        if !result.status.success() {
            let stderr = String::from_utf8_lossy(&result.stderr);
            return Err(RestoreError::Failed(format!("`{cmd}` exited with {}: {}", result.status, stderr.trim())));
        }
        patches
            .iter()
            .enumerate()
            .map(|(i, _)| {
                io::read_gray(&output.join(patch_name(i))).map_err(|e| RestoreError::PatchFailed {
                    patch: i,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}
