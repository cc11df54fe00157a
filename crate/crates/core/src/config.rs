//! Text format for flow graphs, plus the built-in presets.
//!
//! Grammar (one directive per line, `#` starts a comment):
//!
//! ```text
//! node <id> <kind> [key=value ...]   # kind: kernel | threaded | distsim
//! edge <from> <to>
//! root <id>
//! ```
//!
//! Recognized parameters: `workers=N` (threaded), `ranks=P` and
//! `grid=RxC` (distsim). Parsing collects *all* syntax problems with line
//! numbers before reporting, then applies the structural validation from
//! [`FlowGraph::validate`]. `parse` and `render` round-trip.

use std::str::FromStr;

use crate::error::{Diagnostic, Error, Result};
use crate::flowgraph::{ExecKind, FlowGraph, NodeSpec};

/// Parses config text into a structurally valid flow graph.
pub fn parse(text: &str) -> Result<FlowGraph> {
    let mut graph = FlowGraph::default();
    let mut diags: Vec<Diagnostic> = Vec::new();
    // Line each node/edge/root was declared on, to attach structural
    // errors to source locations.
    let mut node_lines: Vec<usize> = Vec::new();
    let mut root_line = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let mut bad = |token: &str, message: String| {
            diags.push(Diagnostic {
                line: lineno,
                token: token.to_string(),
                message,
            });
        };
        match tokens[0] {
            "node" => {
                if tokens.len() < 3 {
                    bad(line.trim(), "node directive needs: node <id> <kind>".into());
                    continue;
                }
                let id = tokens[1];
                let Ok(kind) = ExecKind::from_str(tokens[2]) else {
                    bad(
                        tokens[2],
                        "unknown executor kind (expected kernel, threaded or distsim)".into(),
                    );
                    continue;
                };
                let mut spec = NodeSpec::new(id, kind);
                let mut ok = true;
                for kv in &tokens[3..] {
                    let Some((key, value)) = kv.split_once('=') else {
                        bad(kv, "expected key=value parameter".into());
                        ok = false;
                        continue;
                    };
                    match key {
                        "workers" => match value.parse::<usize>() {
                            Ok(w) => spec.workers = Some(w),
                            Err(_) => {
                                bad(kv, "workers must be a positive integer".into());
                                ok = false;
                            }
                        },
                        "ranks" => match value.parse::<usize>() {
                            Ok(r) => spec.ranks = Some(r),
                            Err(_) => {
                                bad(kv, "ranks must be a positive integer".into());
                                ok = false;
                            }
                        },
                        "grid" => match parse_grid(value) {
                            Some(g) => spec.grid = Some(g),
                            None => {
                                bad(kv, "grid must look like RxC, e.g. grid=2x2".into());
                                ok = false;
                            }
                        },
                        _ => {
                            bad(kv, format!("unknown parameter {key:?}"));
                            ok = false;
                        }
                    }
                }
                if ok {
                    if graph.node(id).is_some() {
                        bad(id, format!("duplicate node id {id:?}"));
                    } else {
                        graph.nodes.push(spec);
                        node_lines.push(lineno);
                    }
                }
            }
            "edge" => {
                if tokens.len() != 3 {
                    bad(line.trim(), "edge directive needs: edge <from> <to>".into());
                    continue;
                }
                graph.edges.push((tokens[1].into(), tokens[2].into()));
            }
            "root" => {
                if tokens.len() != 2 {
                    bad(line.trim(), "root directive needs: root <id>".into());
                    continue;
                }
                if graph.root.is_some() {
                    bad(tokens[1], "root is declared more than once".into());
                } else {
                    graph.root = Some(tokens[1].into());
                    root_line = lineno;
                }
            }
            other => {
                bad(
                    other,
                    "unknown directive (expected node, edge or root)".into(),
                );
            }
        }
    }

    if !diags.is_empty() {
        return Err(Error::Parse(diags));
    }
    // Structural validation, attached to the most relevant line we know.
    if let Err(e) = graph.validate() {
        let message = match e {
            Error::Config(m) => m,
            other => other.to_string(),
        };
        let line = if graph.root.is_none() { 0 } else { root_line };
        return Err(Error::Parse(vec![Diagnostic {
            line,
            token: graph.root.clone().unwrap_or_default(),
            message,
        }]));
    }
    Ok(graph)
}

fn parse_grid(value: &str) -> Option<(usize, usize)> {
    let (r, c) = value.split_once('x')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Renders a graph in the text format; `parse(render(g)) == g`.
pub fn render(graph: &FlowGraph) -> String {
    let mut out = String::new();
    for n in &graph.nodes {
        out.push_str(&format!("node {} {}", n.id, n.kind));
        if let Some(w) = n.workers {
            out.push_str(&format!(" workers={w}"));
        }
        if let Some(r) = n.ranks {
            out.push_str(&format!(" ranks={r}"));
        }
        if let Some((gr, gc)) = n.grid {
            out.push_str(&format!(" grid={gr}x{gc}"));
        }
        out.push('\n');
    }
    for (from, to) in &graph.edges {
        out.push_str(&format!("edge {from} {to}\n"));
    }
    if let Some(root) = &graph.root {
        out.push_str(&format!("root {root}\n"));
    }
    out
}

/// Built-in configurations:
///
/// * `G1` — single kernel node (sequential baseline),
/// * `G2` — threaded node over a kernel node (shared-memory parallel),
/// * `G3` — distsim node over a threaded node over a kernel node,
/// * `G4` — reserved for a GPU backend and reported as out of scope.
pub fn preset(name: &str) -> Result<FlowGraph> {
    match name.to_ascii_uppercase().as_str() {
        "G1" => parse("node cb kernel\nroot cb\n"),
        "G2" => parse("node sg threaded\nnode cb kernel\nedge sg cb\nroot sg\n"),
        "G3" => parse(
            "node dt distsim ranks=2\nnode sg threaded\nnode cb kernel\n\
             edge dt sg\nedge sg cb\nroot dt\n",
        ),
        "G4" => Err(Error::Config(
            "preset G4 needs a GPU executor, which this build does not provide; \
             use G1/G2/G3 or a config file"
                .into(),
        )),
        _ => Err(Error::Config(format!(
            "unknown preset {name:?} (expected G1, G2 or G3, or a config file path)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_grammar_with_comments() {
        let text = "\
# pipeline with every node kind
node dt distsim ranks=4 grid=2x2
node sg threaded workers=3   # trailing comment
node cb kernel

edge dt sg
edge sg cb
root dt
";
        let g = parse(text).unwrap();
        assert_eq!(g.nodes.len(), 3);
        let dt = g.node("dt").unwrap();
        assert_eq!(dt.kind, ExecKind::Distsim);
        assert_eq!(dt.ranks, Some(4));
        assert_eq!(dt.grid, Some((2, 2)));
        assert_eq!(g.node("sg").unwrap().workers, Some(3));
        assert_eq!(g.root.as_deref(), Some("dt"));
        assert_eq!(g.validate().unwrap().len(), 3);
    }

    #[test]
    fn render_parse_round_trips() {
        for name in ["G1", "G2", "G3"] {
            let g = preset(name).unwrap();
            assert_eq!(parse(&render(&g)).unwrap(), g, "{name} round trip");
        }
        let g = parse(
            "node dt distsim ranks=6 grid=2x3\nnode sg threaded workers=7\n\
             node cb kernel\nedge dt sg\nedge sg cb\nroot dt\n",
        )
        .unwrap();
        assert_eq!(parse(&render(&g)).unwrap(), g);
    }

    #[test]
    fn diagnostics_carry_line_numbers_and_tokens() {
        let text = "\
node cb kernel
nod sg threaded
node sg warp
node sg threaded workers=moo
root cb
";
        let err = parse(text).unwrap_err();
        let Error::Parse(diags) = err else {
            panic!("expected parse diagnostics, got {err:?}")
        };
        assert_eq!(diags.len(), 3);
        assert_eq!(diags[0].line, 2);
        assert_eq!(diags[0].token, "nod");
        assert_eq!(diags[1].line, 3);
        assert_eq!(diags[1].token, "warp");
        assert_eq!(diags[2].line, 4);
        assert_eq!(diags[2].token, "workers=moo");
    }

    #[test]
    fn structural_errors_surface_as_diagnostics() {
        // Missing root.
        let err = parse("node cb kernel\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err:?}");
        // Duplicate node.
        let err = parse("node cb kernel\nnode cb kernel\nroot cb\n").unwrap_err();
        let Error::Parse(diags) = err else { panic!() };
        assert_eq!(diags[0].line, 2);
        // Unreachable second node.
        let err = parse("node cb kernel\nnode sg threaded\nroot cb\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn presets() {
        let g1 = preset("G1").unwrap();
        assert_eq!(g1.nodes.len(), 1);
        assert_eq!(g1.depth().unwrap(), 0);
        let g2 = preset("g2").unwrap();
        assert_eq!(g2.depth().unwrap(), 1);
        assert_eq!(g2.node("sg").unwrap().kind, ExecKind::Threaded);
        let g3 = preset("G3").unwrap();
        assert_eq!(g3.depth().unwrap(), 2);
        assert_eq!(g3.node("dt").unwrap().ranks, Some(2));
        let err = preset("G4").unwrap_err();
        assert!(err.to_string().contains("GPU"));
        assert!(preset("G9").is_err());
    }
}
