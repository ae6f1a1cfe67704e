pub mod error;
pub mod front_tracking;
pub mod functionals;
pub mod harness;
pub mod hybrid;
pub mod measures;
pub mod ode;
pub mod profile;
pub mod quad;
pub mod riemann;
pub mod state;
pub mod system;
pub mod viscous;

pub use error::{Error, Result};
pub use state::State;

/// The guide in `book/`, compiled so its examples run as doc-tests.
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    pub mod systems {}
    #[doc = include_str!("../../../book/src/front-tracking.md")]
    pub mod front_tracking {}
    #[doc = include_str!("../../../book/src/viscous.md")]
    pub mod viscous {}
    #[doc = include_str!("../../../book/src/measures.md")]
    pub mod measures {}
    #[doc = include_str!("../../../book/src/hybrid.md")]
    pub mod hybrid {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    pub mod functionals {}
    #[doc = include_str!("../../../book/src/harness.md")]
    pub mod harness {}
}
