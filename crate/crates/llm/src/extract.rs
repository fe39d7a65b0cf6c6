use ccts_core::{ConceptId, ConceptSet, ConceptTree};

use crate::{ChatClient, LlmError};

/// Most paths shown to the extractor.
pub const MAX_TREE_PATHS: usize = 200;

/// Path lines of the deepest `MAX_TREE_PATHS` concepts, in id order.
pub fn tree_listing(tree: &ConceptTree) -> String {
    let mut ids: Vec<ConceptId> = tree.ids().collect();
    if ids.len() > MAX_TREE_PATHS {
        ids.sort_by_key(|&v| (std::cmp::Reverse(tree.depth(v)), v));
        ids.truncate(MAX_TREE_PATHS);
        ids.sort();
    }
    ids.iter().map(|&v| format!("{}\n", tree.path_string(v))).collect()
}

pub fn extraction_prompt(program: &str, tree: &ConceptTree) -> String {
    let root = tree.root_label();
    format!(
        "Describe the algorithmic concepts used by the program below as paths in a concept hierarchy.\n\n\
## KNOWN CONCEPTS\n{}\n\
## PROGRAM\n```python\n{}\n```\n\n\
## OUTPUT FORMAT\nAnswer with one line per concept of the form `path: {root}/<general>/<specific>`. \
Reuse known paths where they fit; add new levels only for genuinely new ideas. Output nothing else.\n",
        tree_listing(tree),
        program.trim_end()
    )
}

/// Resolves every `path:` line into the tree; returns the closure, or `{root}` when nothing parses.
pub fn parse_concept_response(response: &str, tree: &mut ConceptTree) -> ConceptSet {
    let mut found = Vec::new();
    for line in response.lines() {
        let line = line.trim().trim_start_matches(['-', '*', '`']).trim();
        let Some(prefix) = line.get(..5) else { continue };
        if !prefix.eq_ignore_ascii_case("path:") {
            continue;
        }
        let segments: Vec<&str> =
            line[5..].trim().trim_end_matches('`').split('/').map(str::trim).filter(|s| !s.is_empty()).collect();
        if let Ok(id) = tree.resolve_path(&segments) {
            found.push(id);
        }
    }
    let mut set = tree.ancestor_closure(found).unwrap_or_else(|_| ConceptSet::root_only());
    set.insert_closed(tree, ConceptId::ROOT).expect("root exists");
    set
}

/// Asks the model for the program's concepts and inserts them into `tree`.
pub fn extract_concepts(client: &ChatClient, program: &str, tree: &mut ConceptTree) -> Result<ConceptSet, LlmError> {
    let reply = client.call_chat(&extraction_prompt(program, tree))?;
    Ok(parse_concept_response(&reply.text, tree))
}
