//! Placeholder while scaffolding.
