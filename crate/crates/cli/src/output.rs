use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use isi_gnn::parallel::ExecMode;

use crate::error::Result;

/// `v<crate version>-g<commit>` when built inside a git checkout.
pub const VERSION: &str = env!("ISI_LAB_VERSION");

/// Execution settings shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub struct RunContext {
    pub mode: ExecMode,
    /// Writes zero wall times so reruns are byte-identical.
    pub reproducible: bool,
}

/// Opens `path`, or stdout when `None`.
pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

/// Comment line preceding every CSV header.
pub fn preamble(out: &mut dyn Write, hash: &str, seed: u64) -> Result<()> {
    writeln!(out, "# isi-lab {VERSION} config={hash} seed={seed}")?;
    Ok(())
}
