use crate::templates::Dendrogram;

/// Newick text of a dendrogram.
///
/// Nodes sit at half their merge height, so the path length between two
/// leaves equals the height at which they join: a two-leaf tree of height
/// `h` is written `(a:h/2,b:h/2);`.
pub fn to_newick(t: &Dendrogram) -> String {
    let mut out = String::new();
    write_node(t, t.root(), None, &mut out);
    out.push(';');
    out
}

fn write_node(t: &Dendrogram, node: usize, parent_height: Option<f64>, out: &mut String) {
    let n = t.n_leaves();
    if node < n {
        out.push_str(&quote(&t.leaves()[node]));
    } else {
        let m = t.merges()[node - n];
        out.push('(');
        write_node(t, m.left, Some(m.height), out);
        out.push(',');
        write_node(t, m.right, Some(m.height), out);
        out.push(')');
    }
    if let Some(h) = parent_height {
        let len = 0.5 * (h - t.node_height(node));
        out.push(':');
        out.push_str(&len.to_string());
    }
}

fn quote(name: &str) -> String {
    let plain = !name.is_empty()
        && !name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | ':' | ';' | ',' | '\''));
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}
