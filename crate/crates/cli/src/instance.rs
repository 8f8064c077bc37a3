use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use hitlbo_core::problems::{parse_cnf, parse_graph};
use hitlbo_core::reduction::InstanceRef;
use hitlbo_core::{ProblemInstance, ProblemKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Cnf,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    MaxClique,
    MaxSat,
    MinVertexCover,
}

impl Problem {
    pub fn kind(self) -> ProblemKind {
        match self {
            Problem::MaxClique => ProblemKind::MaxClique,
            Problem::MaxSat => ProblemKind::MaxSat,
            Problem::MinVertexCover => ProblemKind::MinVertexCover,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Problem::MaxClique => "max-clique",
            Problem::MaxSat => "max-sat",
            Problem::MinVertexCover => "min-vertex-cover",
        }
    }
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Cnf => "cnf",
            Format::Graph => "graph",
        }
    }

    /// `.cnf` files are CNF, everything else an edge list.
    pub fn guess(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("cnf") => Format::Cnf,
            _ => Format::Graph,
        }
    }
}

/// An instance as named on the command line or in a run request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(default)]
    pub path: Option<String>,
    /// Inline document, used instead of `path`.
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub problem: Option<Problem>,
}

pub struct Loaded {
    pub instance: Arc<ProblemInstance>,
    pub reference: InstanceRef,
}

pub fn parse(text: &str, format: Format, problem: Option<Problem>) -> Result<(ProblemInstance, Problem)> {
    match format {
        Format::Cnf => {
            let problem = problem.unwrap_or(Problem::MaxSat);
            if problem != Problem::MaxSat {
                bail!("CNF documents only describe max-sat instances");
            }
            Ok((parse_cnf(text)?, problem))
        }
        Format::Graph => {
            let problem = problem.unwrap_or(Problem::MaxClique);
            if problem == Problem::MaxSat {
                bail!("edge lists describe max-clique or min-vertex-cover instances");
            }
            Ok((parse_graph(text, problem.kind())?, problem))
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl InstanceSpec {
    pub fn from_path(path: impl Into<String>, format: Option<Format>, problem: Option<Problem>) -> Self {
        InstanceSpec { path: Some(path.into()), text: None, format, problem }
    }

    pub fn load(&self) -> Result<Loaded> {
        let (text, path) = match (&self.text, &self.path) {
            (Some(text), _) => (text.clone(), self.path.clone().unwrap_or_else(|| "<inline>".into())),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read instance {path}"))?;
                (text, path.clone())
            }
            (None, None) => bail!("instance needs a path or inline text"),
        };
        let format = self.format.unwrap_or_else(|| Format::guess(Path::new(&path)));
        let (instance, problem) = parse(&text, format, self.problem).with_context(|| format!("cannot parse {path}"))?;
        let reference = InstanceRef {
            path,
            format: format.name().into(),
            problem: problem.name().into(),
            sha256: sha256_hex(text.as_bytes()),
        };
        Ok(Loaded { instance: Arc::new(instance), reference })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_triangle() {
        let spec = InstanceSpec {
            path: None,
            text: Some("p edge 3 3\ne 1 2\ne 2 3\ne 1 3\n".into()),
            format: Some(Format::Graph),
            problem: None,
        };
        let loaded = spec.load().unwrap();
        assert_eq!(loaded.instance.variable_count(), 3);
        assert_eq!(loaded.reference.problem, "max-clique");
        assert_eq!(loaded.reference.sha256.len(), 64);
    }

    #[test]
    fn cnf_rejects_graph_problems() {
        assert!(parse("p cnf 1 1\n1 0\n", Format::Cnf, Some(Problem::MaxClique)).is_err());
        assert!(parse("p edge 2 0\n", Format::Graph, Some(Problem::MaxSat)).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::guess(Path::new("a/b.CNF")), Format::Cnf);
        assert_eq!(Format::guess(Path::new("a/b.col")), Format::Graph);
    }
}
