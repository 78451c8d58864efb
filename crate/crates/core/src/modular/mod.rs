//! Automatic modularization: minimum vertex cuts as the high-level action
//! space, graph surgery into coupled mechanisms, and per-cut state features.

pub mod cuts;
pub mod features;
pub mod surgery;

pub use cuts::{enumerate_min_cuts, separates, CutError, CutSet, CutSetCatalog, MAX_CUTS};
pub use features::{controllable_region, cut_features, features, CutFeatures};
pub use surgery::{surgery, CcmView, Surgery, SurgeryError};
