use std::path::Path;

use serde::Deserialize;

use crate::data::passage::Passage;
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    #[serde(default)]
    title: String,
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
}

pub fn parse_squad_file(path: impl AsRef<Path>) -> Result<Vec<Passage>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_squad(&text)
}

/// One passage per paragraph context, ids `"{title}-{article}-{paragraph}"`.
pub fn parse_squad(json: &str) -> Result<Vec<Passage>> {
    let file: SquadFile = serde_json::from_str(json).map_err(|e| {
        Error::Data(format!(
            "malformed SQuAD JSON at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let mut out = Vec::new();
    for (ai, article) in file.data.iter().enumerate() {
        for (pi, para) in article.paragraphs.iter().enumerate() {
            let title = if article.title.is_empty() {
                "article"
            } else {
                &article.title
            };
            out.push(Passage::new(format!("{title}-{ai}-{pi}"), para.context.clone()));
        }
    }
    if out.is_empty() {
        log::warn!("SQuAD file contains no paragraphs");
    }
    Ok(out)
}
