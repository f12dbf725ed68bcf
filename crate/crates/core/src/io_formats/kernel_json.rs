use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Dirac, DiracMixture};

/// Free-form description stored next to a kernel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct KernelFile {
    dim: usize,
    order: usize,
    diracs: Vec<Dirac>,
    #[serde(default)]
    meta: KernelMeta,
}

/// Byte offset of a 1-based line/column pair.
pub(crate) fn offset_of(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub(crate) fn json_error(text: &str, e: serde_json::Error) -> Error {
    Error::parse(offset_of(text, e.line(), e.column()), e.to_string())
}

pub fn read_kernel_json(text: &str) -> Result<(DiracMixture, KernelMeta)> {
    let file: KernelFile = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    let mixture = DiracMixture::new(file.dim, file.order, file.diracs)?;
    Ok((mixture, file.meta))
}

pub fn write_kernel_json(mixture: &DiracMixture, meta: &KernelMeta) -> String {
    let file = KernelFile {
        dim: mixture.dim(),
        order: mixture.order(),
        diracs: mixture.diracs().to_vec(),
        meta: meta.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("kernel serialises");
    s.push('\n');
    s
}
