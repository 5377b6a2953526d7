use std::path::Path;

use popsan::checkpoint::{FORMAT_VERSION, MAGIC};

use crate::error::CliError;
use crate::train::load_checkpoint;

/// One line per tensor: name, shape and element count.
pub fn inspect(path: &Path) -> Result<String, CliError> {
    let ck = load_checkpoint(path)?;
    let tensors = &ck.tensors;
    let width = tensors.iter().map(|t| t.name.len()).max().unwrap_or(0);
    let mut out = format!(
        "{} format {} version {FORMAT_VERSION}, {} tensors\n",
        path.display(),
        String::from_utf8_lossy(MAGIC),
        tensors.len()
    );
    for t in tensors {
        let dims: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "{:<width$}  [{}]  {}\n",
            t.name,
            dims.join(", "),
            t.data.len()
        ));
    }
    Ok(out)
}
