//! Interpretability metrics, grouped by the property they measure.

pub mod change;
pub mod ground;
pub mod space;

pub use change::{cac, crc, pac, palc, plc, prc, predicted_class, psc, rank_of, vac, vlc};
pub use ground::{
    background_overlap, consistency, global_size, iord, local_size, npr, object_overlap,
    performance, sparsity, PartHistogram, Performance, DEFAULT_LOCAL_MU, DEFAULT_WEIGHT_EPSILON,
};
pub use space::{
    activation_entropy, cosine_distance, mean_cosine_distance_inter, mean_cosine_distance_intra,
    pairwise_palc_contra, pairwise_plc_contra, top_k_prototypes, ClassVectorSets, IntraDistance,
    Member,
};
