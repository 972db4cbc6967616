use std::ops::Deref;
use std::sync::{Arc, RwLock};

use super::scene::SceneGraph;

/// Immutable view of the graph at one revision.
#[derive(Clone, Debug)]
pub struct GraphSnapshot(Arc<SceneGraph>);

impl GraphSnapshot {
    pub fn new(graph: SceneGraph) -> Self {
        GraphSnapshot(Arc::new(graph))
    }
}

impl Deref for GraphSnapshot {
    type Target = SceneGraph;
    fn deref(&self) -> &SceneGraph {
        &self.0
    }
}

/// Single-writer, multi-reader handle. Writers copy on write when a reader
/// still holds the previous revision, so snapshots never change under them.
#[derive(Debug, Default)]
pub struct SharedGraph {
    inner: RwLock<Arc<SceneGraph>>,
}

impl SharedGraph {
    pub fn new(graph: SceneGraph) -> Self {
        SharedGraph { inner: RwLock::new(Arc::new(graph)) }
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot(self.inner.read().expect("graph lock poisoned").clone())
    }

    pub fn write<R>(&self, f: impl FnOnce(&mut SceneGraph) -> R) -> R {
        let mut g = self.inner.write().expect("graph lock poisoned");
        f(Arc::make_mut(&mut g))
    }

    pub fn into_inner(self) -> SceneGraph {
        let arc = self.inner.into_inner().expect("graph lock poisoned");
        Arc::try_unwrap(arc).unwrap_or_else(|a| (*a).clone())
    }
}

pub fn snapshot(graph: &SceneGraph) -> GraphSnapshot {
    GraphSnapshot::new(graph.clone())
}
