use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::pose::Pose;
use crate::ids::KeyframeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeEntry {
    pub id: KeyframeId,
    /// Relative to the map directory, `images/<content_hash>.png`.
    pub image_path: String,
    pub content_hash: String,
    pub pose: Pose,
    pub timestamp: f64,
    pub width: u32,
    pub height: u32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Global keyframe table. Images are content-addressed, so identical
/// payloads are stored once no matter how many keyframes or objects use them.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KeyframeStore {
    entries: BTreeMap<KeyframeId, KeyframeEntry>,
    payloads: BTreeMap<String, Arc<Vec<u8>>>,
}

impl KeyframeStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a keyframe; `image` may be empty when no payload is kept.
    pub fn insert(&mut self, id: KeyframeId, pose: Pose, width: u32, height: u32, image: Vec<u8>) -> &KeyframeEntry {
        let content_hash = sha256_hex(&image);
        let image_path = format!("images/{content_hash}.png");
        if !image.is_empty() {
            self.payloads.entry(content_hash.clone()).or_insert_with(|| Arc::new(image));
        }
        let entry = KeyframeEntry { id, image_path, content_hash, pose, timestamp: pose.timestamp, width, height };
        self.entries.insert(id, entry);
        &self.entries[&id]
    }

    pub fn insert_entry(&mut self, entry: KeyframeEntry) {
        self.entries.insert(entry.id, entry);
    }

    pub fn attach_payload(&mut self, hash: String, bytes: Vec<u8>) {
        self.payloads.insert(hash, Arc::new(bytes));
    }

    pub fn get(&self, id: KeyframeId) -> Option<&KeyframeEntry> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: KeyframeId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn image(&self, id: KeyframeId) -> Option<Arc<Vec<u8>>> {
        self.entries.get(&id).and_then(|e| self.payloads.get(&e.content_hash)).cloned()
    }

    pub fn entries(&self) -> impl Iterator<Item = &KeyframeEntry> {
        self.entries.values()
    }

    pub fn payloads(&self) -> impl Iterator<Item = (&String, &Arc<Vec<u8>>)> {
        self.payloads.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops keyframes nothing references any more, and orphaned payloads.
    pub fn retain(&mut self, keep: impl Fn(KeyframeId) -> bool) {
        self.entries.retain(|id, _| keep(*id));
        let live: std::collections::BTreeSet<&String> = self.entries.values().map(|e| &e.content_hash).collect();
        self.payloads.retain(|h, _| live.contains(h));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_share_one_payload() {
        let mut s = KeyframeStore::new();
        let pose = Pose::looking(0.0, [0.0; 3], 0.0);
        s.insert(KeyframeId(1), pose, 4, 4, vec![1, 2, 3]);
        s.insert(KeyframeId(2), pose, 4, 4, vec![1, 2, 3]);
        assert_eq!(s.payloads().count(), 1);
        assert_eq!(s.get(KeyframeId(1)).unwrap().image_path, s.get(KeyframeId(2)).unwrap().image_path);
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
