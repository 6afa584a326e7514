//! Server-side neighbor matching over keyed one-way item tokens.
//!
//! Clients upload tokens of the items they interacted with, tagged with an
//! anonymous sender token. The server groups uploads by item token and tells
//! each client which other anonymous senders share each of its tokens. The
//! server never sees a raw item id, and a client never sees a raw user id.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Shared secret known to clients, not to the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenKey(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemToken(pub [u8; 16]);

/// Anonymous handle for a client, issued by the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserToken(pub [u8; 16]);

impl fmt::Display for ItemToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
    }
}

impl fmt::Display for UserToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
    }
}

// Tokens travel as hex strings.
impl Serialize for ItemToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Serialize for UserToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn keyed_digest(key: u64, domain: &[u8], id: u64) -> [u8; 16] {
    let mut h = Sha256::new();
    h.update(key.to_le_bytes());
    h.update(domain);
    h.update(id.to_le_bytes());
    let full = h.finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&full[..16]);
    out
}

impl TokenKey {
    pub fn item_token(&self, item: usize) -> ItemToken {
        ItemToken(keyed_digest(self.0, b"item", item as u64))
    }

    pub fn user_token(&self, user: usize) -> UserToken {
        UserToken(keyed_digest(self.0, b"user", user as u64))
    }
}

/// What one client sends to the matcher.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenUpload {
    pub sender: UserToken,
    pub items: Vec<ItemToken>,
}

/// One reply entry: another anonymous client shares `item`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct NeighborEntry {
    pub item: ItemToken,
    pub neighbor: UserToken,
}

/// For each upload, the entries naming other senders that share a token.
/// Output order follows input order; entries within a reply are sorted.
pub fn neighborhood_match(uploads: &[TokenUpload]) -> Vec<Vec<NeighborEntry>> {
    let mut holders: BTreeMap<ItemToken, Vec<UserToken>> = BTreeMap::new();
    for up in uploads {
        for &tok in &up.items {
            holders.entry(tok).or_default().push(up.sender);
        }
    }
    uploads
        .iter()
        .map(|up| {
            let mut entries: Vec<NeighborEntry> = up
                .items
                .iter()
                .flat_map(|tok| {
                    holders[tok]
                        .iter()
                        .filter(move |&&s| s != up.sender)
                        .map(move |&neighbor| NeighborEntry { item: *tok, neighbor })
                })
                .collect();
            entries.sort_unstable();
            entries.dedup();
            entries
        })
        .collect()
}

/// Client-side decoding of matcher replies back to the client's own item ids.
pub fn decode_reply(key: &TokenKey, own_items: &[usize], reply: &[NeighborEntry]) -> Vec<(UserToken, usize)> {
    let lookup: BTreeMap<ItemToken, usize> = own_items.iter().map(|&i| (key.item_token(i), i)).collect();
    let mut out: Vec<(UserToken, usize)> = reply
        .iter()
        .filter_map(|e| lookup.get(&e.item).map(|&i| (e.neighbor, i)))
        .collect();
    out.sort_unstable();
    out
}

/// Run the full upload/match/decode exchange for every user's training
/// items. Returns per-user neighbor pairs and the server-side directory of
/// anonymous tokens.
pub fn match_all(key: &TokenKey, train: &[Vec<usize>]) -> (Vec<Vec<(UserToken, usize)>>, Directory) {
    let uploads: Vec<TokenUpload> = train
        .iter()
        .enumerate()
        .map(|(u, items)| TokenUpload {
            sender: key.user_token(u),
            items: items.iter().map(|&i| key.item_token(i)).collect(),
        })
        .collect();
    let replies = neighborhood_match(&uploads);
    let decoded = replies
        .iter()
        .zip(train)
        .map(|(reply, items)| decode_reply(key, items, reply))
        .collect();
    (decoded, Directory::new(uploads.iter().map(|u| u.sender)))
}

/// Server-side map from anonymous tokens to upload slots.
#[derive(Clone, Debug, Default)]
pub struct Directory {
    slots: BTreeMap<UserToken, usize>,
}

impl Directory {
    pub fn new(tokens: impl IntoIterator<Item = UserToken>) -> Self {
        Self {
            slots: tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect(),
        }
    }

    pub fn slot(&self, token: &UserToken) -> Option<usize> {
        self.slots.get(token).copied()
    }
}
