use std::collections::HashMap;

use super::{ModelError, OrgKind, OrgNode, OrgNodeId};

/// Rooted org tree. Nodes are only ever added under an existing parent, so
/// the structure stays acyclic; team nodes are leaves.
#[derive(Clone, Debug, Default)]
pub struct OrgTree {
    nodes: Vec<OrgNode>,
    index: HashMap<OrgNodeId, usize>,
    parent: Vec<Option<usize>>,
    depth: Vec<u32>,
    root: Option<usize>,
}

impl OrgTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[OrgNode] {
        &self.nodes
    }

    pub fn root(&self) -> Option<&OrgNode> {
        self.root.map(|ix| &self.nodes[ix])
    }

    pub fn get(&self, id: &OrgNodeId) -> Option<&OrgNode> {
        self.index.get(id).map(|&ix| &self.nodes[ix])
    }

    pub(crate) fn index_of(&self, id: &OrgNodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn node(&self, ix: usize) -> &OrgNode {
        &self.nodes[ix]
    }

    pub fn parent_links(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }

    pub(crate) fn check_insert(&self, node: &OrgNode) -> Result<(), ModelError> {
        if self.index.contains_key(&node.node_id) {
            return Err(ModelError::InvalidOrgTree(format!(
                "duplicate node `{}`",
                node.node_id
            )));
        }
        match &node.parent_id {
            None => {
                if self.root.is_some() {
                    return Err(ModelError::InvalidOrgTree(format!(
                        "second root `{}`",
                        node.node_id
                    )));
                }
            }
            Some(parent) => {
                let pix = self
                    .index
                    .get(parent)
                    .ok_or_else(|| ModelError::UnknownOrgNode(parent.clone()))?;
                if self.nodes[*pix].kind == OrgKind::Team {
                    return Err(ModelError::InvalidOrgTree(format!(
                        "team `{parent}` cannot have children"
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn insert(&mut self, node: OrgNode) -> Result<usize, ModelError> {
        self.check_insert(&node)?;
        let ix = self.nodes.len();
        let parent = node.parent_id.as_ref().map(|p| self.index[p]);
        self.depth
            .push(parent.map_or(0, |p| self.depth[p] + 1));
        self.parent.push(parent);
        if parent.is_none() {
            self.root = Some(ix);
        }
        self.index.insert(node.node_id.clone(), ix);
        self.nodes.push(node);
        Ok(ix)
    }

    pub(crate) fn is_leaf_ix(&self, ix: usize) -> bool {
        self.nodes[ix].kind == OrgKind::Team
    }

    /// Number of tree edges on the path between two nodes.
    pub(crate) fn distance_ix(&self, mut a: usize, mut b: usize) -> u32 {
        let mut hops = 0;
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root has a parent");
            hops += 1;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root has a parent");
            hops += 1;
        }
        while a != b {
            a = self.parent[a].expect("nodes share the root");
            b = self.parent[b].expect("nodes share the root");
            hops += 2;
        }
        hops
    }

    pub fn distance(&self, a: &OrgNodeId, b: &OrgNodeId) -> Option<u32> {
        Some(self.distance_ix(self.index_of(a)?, self.index_of(b)?))
    }
}
