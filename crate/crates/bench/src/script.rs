//! Stream scripts: one request per line, `I <csv-row>` or `D <position>`.
//! Blank lines and lines starting with `#` are skipped.

use anyhow::{bail, Context};
use unlearn_core::stream::StreamRequest;

pub fn parse_script(text: &str) -> anyhow::Result<Vec<StreamRequest>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (op, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let req = match op {
            "I" | "i" => {
                let row = rest
                    .split(',')
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<Result<Vec<f64>, _>>()
                    .with_context(|| format!("line {}: bad row `{rest}`", i + 1))?;
                StreamRequest::Insert(row)
            }
            "D" | "d" => {
                let pos: usize = rest.parse().with_context(|| format!("line {}: bad position `{rest}`", i + 1))?;
                if pos == 0 {
                    bail!("line {}: positions start at 1", i + 1);
                }
                StreamRequest::Delete(pos)
            }
            other => bail!("line {}: unknown request `{other}`", i + 1),
        };
        out.push(req);
    }
    Ok(out)
}
