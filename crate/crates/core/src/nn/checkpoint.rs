use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Mlp;
use crate::error::{Error, Result};

const MAGIC: &str = "NEURWIN-CKPT v1";

/// Network snapshot after `episodes` training episodes.
///
/// On disk: the magic line, the layer sizes, the episode count, then one
/// parameter per line with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub episodes: u64,
    /// Hash of the training configuration; not persisted.
    pub config_hash: Option<u64>,
}

impl Checkpoint {
    pub fn file_name(episodes: u64) -> String {
        format!("ckpt_{episodes}.txt")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 + 25 * self.net.len());
        out.push_str(MAGIC);
        out.push('\n');
        let sizes: Vec<String> = self.net.sizes().iter().map(|n| n.to_string()).collect();
        out.push_str(&sizes.join(" "));
        out.push('\n');
        let _ = writeln!(out, "{}", self.episodes);
        for p in self.net.params() {
            let _ = writeln!(out, "{p:.16e}");
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint {
            path: origin.to_path_buf(),
            msg,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == MAGIC => {}
            other => return Err(bad(format!("bad header {other:?}"))),
        }
        let sizes = lines
            .next()
            .ok_or_else(|| bad("missing layer sizes".into()))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| bad(format!("layer size '{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let episodes = lines
            .next()
            .ok_or_else(|| bad("missing episode count".into()))?
            .trim()
            .parse::<u64>()
            .map_err(|e| bad(format!("episode count: {e}")))?;
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| bad(format!("parameter '{l}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let net = Mlp::from_params(&sizes, params).map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            net,
            episodes,
            config_hash: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
