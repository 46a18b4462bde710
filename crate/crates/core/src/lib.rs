//! Knowledge base model, rule language, inference engine, rule induction and
//! experience-based learning for a small diagnostic expert system.

pub mod induction;
pub mod lang;
pub mod model;
pub mod inference;
pub mod validate;
pub mod learner;
pub mod store;
pub mod bundled;
