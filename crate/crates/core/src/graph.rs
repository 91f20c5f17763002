//! Vertex, hyperedge and hypergraph types shared by every stage.
//!
//! Vertices live in three disjoint ordinal spaces (users, items, categories).
//! A global ordinal lays them out as the user block, then the item block,
//! then the category block. All hyperedge weights are 1, so a vertex degree
//! is simply the number of hyperedges containing it.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKind {
    User,
    Item,
    Category,
}

impl VertexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VertexKind::User => "user",
            VertexKind::Item => "item",
            VertexKind::Category => "category",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "user" => Some(VertexKind::User),
            "item" => Some(VertexKind::Item),
            "category" => Some(VertexKind::Category),
            _ => None,
        }
    }
}

impl fmt::Display for VertexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A vertex identified by its kind and its zero-based ordinal within that kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub kind: VertexKind,
    pub index: usize,
}

impl VertexId {
    pub fn user(index: usize) -> Self {
        VertexId { kind: VertexKind::User, index }
    }

    pub fn item(index: usize) -> Self {
        VertexId { kind: VertexKind::Item, index }
    }

    pub fn category(index: usize) -> Self {
        VertexId { kind: VertexKind::Category, index }
    }
}

/// Vertex counts per kind; converts between typed ids and global ordinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexLayout {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
}

impl VertexLayout {
    pub fn new(n_users: usize, n_items: usize, n_categories: usize) -> Self {
        VertexLayout { n_users, n_items, n_categories }
    }

    pub fn total(&self) -> usize {
        self.n_users + self.n_items + self.n_categories
    }

    pub fn count(&self, kind: VertexKind) -> usize {
        match kind {
            VertexKind::User => self.n_users,
            VertexKind::Item => self.n_items,
            VertexKind::Category => self.n_categories,
        }
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index < self.count(v.kind)
    }

    pub fn global(&self, v: VertexId) -> usize {
        match v.kind {
            VertexKind::User => v.index,
            VertexKind::Item => self.n_users + v.index,
            VertexKind::Category => self.n_users + self.n_items + v.index,
        }
    }

    pub fn user(&self, u: usize) -> usize {
        u
    }

    pub fn item(&self, i: usize) -> usize {
        self.n_users + i
    }

    pub fn category(&self, c: usize) -> usize {
        self.n_users + self.n_items + c
    }

    pub fn vertex(&self, global: usize) -> Option<VertexId> {
        if global < self.n_users {
            Some(VertexId::user(global))
        } else if global < self.n_users + self.n_items {
            Some(VertexId::item(global - self.n_users))
        } else if global < self.total() {
            Some(VertexId::category(global - self.n_users - self.n_items))
        } else {
            None
        }
    }
}

/// One observed interaction, keyed by external ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub timestamp: Option<i64>,
}

impl InteractionRecord {
    pub fn new(user: impl Into<String>, item: impl Into<String>) -> Self {
        InteractionRecord { user: user.into(), item: item.into(), timestamp: None }
    }

    pub fn with_timestamp(mut self, ts: i64) -> Self {
        self.timestamp = Some(ts);
        self
    }
}

/// Dense ordinal space for one vertex kind with its external ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdSpace {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the ordinal of `id`, assigning the next one on first sight.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&ix) = self.index.get(id) {
            return ix;
        }
        let ix = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), ix);
        ix
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }
}

/// External-id mapping for all three vertex kinds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: IdSpace,
    pub items: IdSpace,
    pub categories: IdSpace,
}

impl IdMap {
    pub fn space(&self, kind: VertexKind) -> &IdSpace {
        match kind {
            VertexKind::User => &self.users,
            VertexKind::Item => &self.items,
            VertexKind::Category => &self.categories,
        }
    }

    pub fn space_mut(&mut self, kind: VertexKind) -> &mut IdSpace {
        match kind {
            VertexKind::User => &mut self.users,
            VertexKind::Item => &mut self.items,
            VertexKind::Category => &mut self.categories,
        }
    }

    pub fn layout(&self) -> VertexLayout {
        VertexLayout::new(self.users.len(), self.items.len(), self.categories.len())
    }
}

/// User-item interaction graph with deduplicated edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_users: usize,
    n_items: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    /// Builds a graph over fixed ordinal spaces. Duplicate pairs collapse.
    ///
    /// Entities without edges are allowed here, which is what a training split
    /// of an ingested graph looks like.
    pub fn from_edges(
        n_users: usize,
        n_items: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n_users];
        for (u, i) in edges {
            if u >= n_users || i >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {i}) outside {n_users} users x {n_items} items"
                )));
            }
            adjacency[u].push(i);
        }
        let mut flat = Vec::new();
        for (u, items) in adjacency.iter_mut().enumerate() {
            items.sort_unstable();
            items.dedup();
            flat.extend(items.iter().map(|&i| (u, i)));
        }
        Ok(BipartiteGraph { n_users, n_items, edges: flat, adjacency })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Edges sorted by (user, item).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.adjacency[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.adjacency.get(user).is_some_and(|items| items.binary_search(&item).is_ok())
    }
}

/// Deduplicates interaction records into a bipartite graph.
///
/// Records are stably ordered by timestamp (absent timestamps first) and
/// users/items are numbered densely in order of first appearance.
pub fn build_bipartite(records: &[InteractionRecord]) -> Result<(BipartiteGraph, IdMap)> {
    if records.is_empty() {
        return Err(Error::NoInteractions);
    }
    let mut order: Vec<&InteractionRecord> = records.iter().collect();
    order.sort_by_key(|r| r.timestamp);

    let mut ids = IdMap::default();
    let mut pairs = Vec::with_capacity(order.len());
    for r in order {
        let u = ids.users.intern(&r.user);
        let i = ids.items.intern(&r.item);
        pairs.push((u, i));
    }
    let graph = BipartiteGraph::from_edges(ids.users.len(), ids.items.len(), pairs)?;
    Ok((graph, ids))
}

/// Item to category assignment. Normally a total function; in multi-category
/// mode an item may carry several categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMap {
    n_categories: usize,
    of_item: Vec<Vec<usize>>,
}

impl CategoryMap {
    /// Single-category map from `item -> category`.
    pub fn new(n_categories: usize, item_category: Vec<usize>) -> Result<Self> {
        Self::multi(n_categories, item_category.into_iter().map(|c| vec![c]).collect())
    }

    pub fn multi(n_categories: usize, of_item: Vec<Vec<usize>>) -> Result<Self> {
        let mut used = vec![false; n_categories];
        let mut of_item = of_item;
        for (i, cats) in of_item.iter_mut().enumerate() {
            cats.sort_unstable();
            cats.dedup();
            if cats.is_empty() {
                return Err(Error::MissingCategory(i.to_string()));
            }
            for &c in cats.iter() {
                if c >= n_categories {
                    return Err(Error::InvalidArgument(format!(
                        "item {i} mapped to category {c} of {n_categories}"
                    )));
                }
                used[c] = true;
            }
        }
        if let Some(c) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidArgument(format!("category {c} has no items")));
        }
        Ok(CategoryMap { n_categories, of_item })
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_items(&self) -> usize {
        self.of_item.len()
    }

    pub fn categories_of(&self, item: usize) -> &[usize] {
        &self.of_item[item]
    }

    /// First (for single-category maps, the only) category of `item`.
    pub fn category(&self, item: usize) -> usize {
        self.of_item[item][0]
    }

    pub fn is_multi(&self) -> bool {
        self.of_item.iter().any(|c| c.len() > 1)
    }

    pub fn has_category(&self, item: usize, category: usize) -> bool {
        self.of_item[item].binary_search(&category).is_ok()
    }
}

/// Resolves `item_id -> category_id` rows against the item id space.
///
/// Rows naming items outside `ids.items` are ignored. Categories are numbered
/// in order of first appearance over items in ordinal order, and the result
/// is stored in `ids.categories`.
pub fn build_category_map(
    ids: &mut IdMap,
    rows: &[(String, String)],
    multi_category: bool,
) -> Result<CategoryMap> {
    let mut raw: Vec<Vec<&str>> = vec![Vec::new(); ids.items.len()];
    for (item, cat) in rows {
        let Some(i) = ids.items.get(item) else { continue };
        if raw[i].contains(&cat.as_str()) {
            continue;
        }
        if !raw[i].is_empty() && !multi_category {
            return Err(Error::DuplicateCategory(item.clone()));
        }
        raw[i].push(cat);
    }
    let mut categories = IdSpace::new();
    let mut of_item = Vec::with_capacity(raw.len());
    for (i, cats) in raw.iter().enumerate() {
        if cats.is_empty() {
            return Err(Error::MissingCategory(ids.items.external(i).to_string()));
        }
        of_item.push(cats.iter().map(|c| categories.intern(c)).collect());
    }
    ids.categories = categories;
    CategoryMap::multi(ids.categories.len(), of_item)
}

/// A (user, item set, category) relation in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hyperedge {
    pub user: usize,
    pub items: Vec<usize>,
    pub category: usize,
}

impl Hyperedge {
    /// Builds a canonical hyperedge: items sorted and deduplicated.
    pub fn new(user: usize, items: impl IntoIterator<Item = usize>, category: usize) -> Result<Self> {
        let mut items: Vec<usize> = items.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        if items.is_empty() {
            return Err(Error::InvalidHyperedge(format!(
                "empty item set for user {user}, category {category}"
            )));
        }
        Ok(Hyperedge { user, items, category })
    }

    /// Number of member vertices, |items| + 2.
    pub fn cardinality(&self) -> usize {
        self.items.len() + 2
    }

    fn is_canonical(&self) -> bool {
        !self.items.is_empty() && self.items.windows(2).all(|w| w[0] < w[1])
    }
}

/// Users, items and categories joined by (user, item set, category) hyperedges,
/// with incidence stored both vertex-major and hyperedge-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroHypergraph {
    layout: VertexLayout,
    hyperedges: Vec<Hyperedge>,
    // global vertex -> ascending hyperedge indices
    incident: Vec<Vec<usize>>,
    // hyperedge -> global member ordinals (user, items.., category)
    members: Vec<Vec<usize>>,
}

impl HeteroHypergraph {
    pub fn new(layout: VertexLayout, hyperedges: Vec<Hyperedge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(hyperedges.len());
        let mut incident = vec![Vec::new(); layout.total()];
        let mut members = Vec::with_capacity(hyperedges.len());
        for (e, h) in hyperedges.iter().enumerate() {
            if !h.is_canonical() {
                return Err(Error::InvalidHyperedge(format!(
                    "items of hyperedge {e} are empty or not strictly ascending"
                )));
            }
            if h.user >= layout.n_users
                || h.category >= layout.n_categories
                || h.items.iter().any(|&i| i >= layout.n_items)
            {
                return Err(Error::InvalidHyperedge(format!(
                    "hyperedge {e} references a vertex outside the layout"
                )));
            }
            if !seen.insert(h) {
                return Err(Error::DuplicateHyperedge { user: h.user, category: h.category });
            }
            let mut m = Vec::with_capacity(h.cardinality());
            m.push(layout.user(h.user));
            m.extend(h.items.iter().map(|&i| layout.item(i)));
            m.push(layout.category(h.category));
            for &v in &m {
                incident[v].push(e);
            }
            members.push(m);
        }
        Ok(HeteroHypergraph { layout, hyperedges, incident, members })
    }

    pub fn layout(&self) -> VertexLayout {
        self.layout
    }

    pub fn n_vertices(&self) -> usize {
        self.layout.total()
    }

    pub fn n_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Hyperedge] {
        &self.hyperedges
    }

    pub fn hyperedge(&self, e: usize) -> &Hyperedge {
        &self.hyperedges[e]
    }

    /// Hyperedges containing global vertex `v`, ascending.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// Global member ordinals of hyperedge `e`.
    pub fn members(&self, e: usize) -> &[usize] {
        &self.members[e]
    }

    pub fn vertex_degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn edge_degree(&self, e: usize) -> usize {
        self.members[e].len()
    }

    pub fn contains(&self, v: usize, e: usize) -> bool {
        self.incident[v].binary_search(&e).is_ok()
    }

    /// Vertex degrees (row sums of the incidence) and hyperedge degrees
    /// (column sums).
    pub fn degrees(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.incident.iter().map(Vec::len).collect(),
            self.members.iter().map(Vec::len).collect(),
        )
    }

    pub fn incidence_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// Global ordinals of vertices with at least one incident hyperedge.
    pub fn non_isolated(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| !self.incident[v].is_empty()).collect()
    }

    /// Returns a new hypergraph with `extra` appended after the existing
    /// hyperedges.
    pub fn extended(&self, extra: Vec<Hyperedge>) -> Result<Self> {
        let mut all = self.hyperedges.clone();
        all.extend(extra);
        HeteroHypergraph::new(self.layout, all)
    }
}
