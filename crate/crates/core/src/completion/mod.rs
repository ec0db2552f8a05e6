//! Social-graph completion: co-occurrence counts, GloVe user embeddings,
//! virtual friends and per-session completed ego graphs.

mod cooccur;
mod glove;
mod graph;

pub use cooccur::{build_cooccurrence, CooccurrenceMatrix};
pub use glove::{train_glove, train_glove_entries, weight, GloveConfig, GloveEmbeddings, GloveModel, GloveReport};
pub use graph::{
    complete_graph, pair_log_partition, score_virtual, select_virtual_friends, write_edges_tsv, CompletedGraph,
    CompletionConfig, Neighbor, Relation, SocialContext, VirtualFriends,
};
