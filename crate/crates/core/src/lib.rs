pub mod agent;
pub mod data;
pub mod evolve;
pub mod expr;
pub mod fitness;
pub mod lsq;
pub mod mechanics;
pub mod pareto;
pub mod skills;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    pub mod kinematics {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    pub mod expressions {}
    #[doc = include_str!("../../../book/src/skills.md")]
    pub mod skills {}
    #[doc = include_str!("../../../book/src/fitness.md")]
    pub mod fitness {}
    #[doc = include_str!("../../../book/src/search.md")]
    pub mod search {}
    #[doc = include_str!("../../../book/src/selection.md")]
    pub mod selection {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
