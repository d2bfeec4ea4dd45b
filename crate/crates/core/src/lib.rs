pub mod dataset;
pub mod error;
pub mod hiertest;
pub mod hiertree;
pub mod linalg;
pub mod lowdim;
pub mod meta;
pub mod multisplit;
pub mod scalar;
pub mod screening;
pub mod simlab;
pub mod special;
pub mod varexpl;

pub use dataset::{BlockMap, Family, PositionMap};
pub use error::{Error, Result};
pub use hiertree::HierTree;
pub use meta::MetaMethod;

pub type Dataset = dataset::Dataset<f64>;
pub type StudyCollection = dataset::StudyCollection<f64>;
pub type LassoConfig = screening::LassoConfig<f64>;
pub type MultiSplitConfig = multisplit::MultiSplitConfig<f64>;
pub type MultiSplitTester<'a> = multisplit::MultiSplitTester<'a, f64>;
pub type MetaTester<'a> = meta::MetaTester<'a, f64>;
pub type HierarchyResult = hiertest::HierarchyResult<f64>;
pub type ClusterFinding = hiertest::ClusterFinding<f64>;
pub type R2Report = varexpl::R2Report<f64>;
