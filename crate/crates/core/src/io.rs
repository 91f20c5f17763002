//! Tab-separated file formats.
//!
//! | file | line format |
//! |------|-------------|
//! | interactions | `user_id<TAB>item_id[<TAB>timestamp]` |
//! | categories | `item_id<TAB>category_id` |
//! | id map | `kind<TAB>external_id<TAB>ordinal` |
//! | hypergraph | `user<TAB>category<TAB>item,item,...` |
//! | completion report | `user<TAB>cluster<TAB>category<TAB>item,item,...` |
//! | view dump | `view_id<TAB>v0<TAB>vertex_count<TAB>hyperedge,hyperedge,...` |
//!
//! Blank lines and lines starting with `#` are ignored on input.

use std::fmt::Write as _;
use std::path::Path;

use crate::completion::Completion;
use crate::error::{Error, Result};
use crate::graph::{HeteroHypergraph, Hyperedge, IdMap, InteractionRecord, VertexKind};
use crate::sampling::ViewSet;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_interactions(text: &str, source: &str) -> Result<Vec<InteractionRecord>> {
    let mut out = Vec::new();
    for (no, line) in data_lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&cols.len()) || cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::parse(source, no, "expected user<TAB>item[<TAB>timestamp]"));
        }
        let mut rec = InteractionRecord::new(cols[0], cols[1]);
        if let Some(ts) = cols.get(2) {
            let ts = ts.trim();
            rec.timestamp = Some(ts.parse().map_err(|_| Error::parse(source, no, format!("bad timestamp {ts:?}")))?);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_interactions(path: &Path) -> Result<Vec<InteractionRecord>> {
    parse_interactions(&read_text(path)?, &path.display().to_string())
}

pub fn parse_category_rows(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in data_lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::parse(source, no, "expected item<TAB>category"));
        }
        out.push((cols[0].to_string(), cols[1].to_string()));
    }
    Ok(out)
}

pub fn read_category_rows(path: &Path) -> Result<Vec<(String, String)>> {
    parse_category_rows(&read_text(path)?, &path.display().to_string())
}

/// `user<TAB>item` lines for ordinal edges, in the given order.
pub fn edges_to_tsv(edges: &[(usize, usize)], ids: &IdMap) -> String {
    let mut s = String::new();
    for &(u, i) in edges {
        writeln!(s, "{}\t{}", ids.users.external(u), ids.items.external(i)).unwrap();
    }
    s
}

/// Parses `user<TAB>item` lines against an existing id map.
pub fn edges_from_tsv(text: &str, ids: &IdMap, source: &str) -> Result<Vec<(usize, usize)>> {
    parse_interactions(text, source)?
        .into_iter()
        .enumerate()
        .map(|(n, r)| match (ids.users.get(&r.user), ids.items.get(&r.item)) {
            (Some(u), Some(i)) => Ok((u, i)),
            _ => Err(Error::parse(source, n + 1, format!("unknown user/item {}/{}", r.user, r.item))),
        })
        .collect()
}

pub fn category_map_to_tsv(ids: &IdMap, cm: &crate::graph::CategoryMap) -> String {
    let mut s = String::new();
    for i in 0..cm.n_items() {
        for &c in cm.categories_of(i) {
            writeln!(s, "{}\t{}", ids.items.external(i), ids.categories.external(c)).unwrap();
        }
    }
    s
}

pub fn idmap_to_tsv(ids: &IdMap) -> String {
    let mut s = String::new();
    for kind in [VertexKind::User, VertexKind::Item, VertexKind::Category] {
        for (ordinal, ext) in ids.space(kind).iter().enumerate() {
            writeln!(s, "{kind}\t{ext}\t{ordinal}").unwrap();
        }
    }
    s
}

pub fn idmap_from_tsv(text: &str, source: &str) -> Result<IdMap> {
    let mut ids = IdMap::default();
    for (no, line) in data_lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(source, no, "expected kind<TAB>external_id<TAB>ordinal"));
        }
        let kind = VertexKind::parse(cols[0]).ok_or_else(|| Error::parse(source, no, format!("unknown kind {:?}", cols[0])))?;
        let ordinal: usize = cols[2].parse().map_err(|_| Error::parse(source, no, "bad ordinal"))?;
        let space = ids.space_mut(kind);
        if ordinal != space.len() || space.get(cols[1]).is_some() {
            return Err(Error::parse(source, no, "ordinals must be dense, ascending and unique"));
        }
        space.intern(cols[1]);
    }
    Ok(ids)
}

fn join_items(items: &[usize], ids: &IdMap) -> String {
    items.iter().map(|&i| ids.items.external(i)).collect::<Vec<_>>().join(",")
}

/// One hyperedge per line, in hypergraph order, with external ids.
pub fn hypergraph_to_tsv(hh: &HeteroHypergraph, ids: &IdMap) -> String {
    let mut s = String::new();
    for h in hh.hyperedges() {
        writeln!(
            s,
            "{}\t{}\t{}",
            ids.users.external(h.user),
            ids.categories.external(h.category),
            join_items(&h.items, ids)
        )
        .unwrap();
    }
    s
}

pub fn hypergraph_from_tsv(text: &str, ids: &IdMap, source: &str) -> Result<HeteroHypergraph> {
    let mut edges = Vec::new();
    for (no, line) in data_lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(source, no, "expected user<TAB>category<TAB>items"));
        }
        let lookup = |kind: VertexKind, id: &str| {
            ids.space(kind).get(id).ok_or_else(|| Error::parse(source, no, format!("unknown {kind} {id:?}")))
        };
        let user = lookup(VertexKind::User, cols[0])?;
        let category = lookup(VertexKind::Category, cols[1])?;
        let items = cols[2].split(',').map(|i| lookup(VertexKind::Item, i)).collect::<Result<Vec<_>>>()?;
        edges.push(Hyperedge::new(user, items, category).map_err(|e| Error::parse(source, no, e.to_string()))?);
    }
    HeteroHypergraph::new(ids.layout(), edges)
}

pub fn completion_report(completion: &Completion, ids: &IdMap) -> String {
    let mut s = String::from("#user\tcluster\tcategory\titems\n");
    for a in &completion.added {
        let h = completion.graph.hyperedge(a.edge);
        writeln!(
            s,
            "{}\t{}\t{}\t{}",
            ids.users.external(a.user),
            a.cluster,
            ids.categories.external(a.category),
            join_items(&h.items, ids)
        )
        .unwrap();
    }
    s
}

/// View dump; `v0` is the global vertex ordinal.
pub fn views_to_tsv(views: &ViewSet) -> String {
    let mut s = String::new();
    for (n, v) in views.views.iter().enumerate() {
        let edges: Vec<String> = v.hyperedges.iter().map(ToString::to_string).collect();
        writeln!(s, "{n}\t{}\t{}\t{}", v.start, v.vertices.len(), edges.join(",")).unwrap();
    }
    s
}
