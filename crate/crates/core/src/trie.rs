//! Binary trie keyed on prefix bits, one root per address family.
//!
//! Nodes live in a flat arena. Lookups walk at most `prefix.len()` edges and
//! yield every stored value on the way, which gives both covering-prefix
//! enumeration and longest-prefix match.

use crate::prefix::{Family, Prefix};

#[derive(Clone, Debug)]
struct Node<T> {
    children: [u32; 2],
    value: Option<T>,
}

const NIL: u32 = u32::MAX;

impl<T> Node<T> {
    fn empty() -> Self {
        Node {
            children: [NIL, NIL],
            value: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrefixTrie<T> {
    nodes: Vec<Node<T>>,
    len: usize,
}

impl<T> Default for PrefixTrie<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> PrefixTrie<T> {
    pub fn new() -> Self {
        // node 0 is the v4 root, node 1 the v6 root
        PrefixTrie {
            nodes: vec![Node::empty(), Node::empty()],
            len: 0,
        }
    }

    fn root(family: Family) -> u32 {
        match family {
            Family::V4 => 0,
            Family::V6 => 1,
        }
    }

    /// Number of prefixes holding a value.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Returns the slot for `prefix`, inserting `default()` if it was empty.
    pub fn entry_or_insert_with(&mut self, prefix: &Prefix, default: impl FnOnce() -> T) -> &mut T {
        let mut node = Self::root(prefix.family());
        for i in 0..prefix.len() {
            let b = usize::from(prefix.bit(i));
            let next = self.nodes[node as usize].children[b];
            node = if next == NIL {
                let id = u32::try_from(self.nodes.len()).expect("trie arena overflow");
                self.nodes.push(Node::empty());
                self.nodes[node as usize].children[b] = id;
                id
            } else {
                next
            };
        }
        let slot = &mut self.nodes[node as usize].value;
        if slot.is_none() {
            self.len += 1;
            *slot = Some(default());
        }
        slot.as_mut().expect("slot just filled")
    }

    pub fn insert(&mut self, prefix: &Prefix, value: T) -> Option<T> {
        let mut value = Some(value);
        let slot = self.entry_or_insert_with(prefix, || value.take().expect("value"));
        // still holding the value means the slot was already occupied
        value.map(|v| std::mem::replace(slot, v))
    }

    pub fn get(&self, prefix: &Prefix) -> Option<&T> {
        let mut node = Self::root(prefix.family());
        for i in 0..prefix.len() {
            node = self.nodes[node as usize].children[usize::from(prefix.bit(i))];
            if node == NIL {
                return None;
            }
        }
        self.nodes[node as usize].value.as_ref()
    }

    /// All stored entries whose prefix covers `prefix`, least specific first.
    pub fn covering<'a>(&'a self, prefix: &Prefix) -> Vec<(u8, &'a T)> {
        let mut out = Vec::new();
        let mut node = Self::root(prefix.family());
        let mut depth = 0u8;
        loop {
            if let Some(v) = &self.nodes[node as usize].value {
                out.push((depth, v));
            }
            if depth == prefix.len() {
                break;
            }
            node = self.nodes[node as usize].children[usize::from(prefix.bit(depth))];
            if node == NIL {
                break;
            }
            depth += 1;
        }
        out
    }

    /// Longest stored prefix covering `prefix`.
    pub fn longest_match<'a>(&'a self, prefix: &Prefix) -> Option<(u8, &'a T)> {
        self.covering(prefix).pop()
    }
}
