//! Tutoring engine that compares a learner's Scratch project with a
//! reference solution and walks the learner through the differences one
//! hint at a time.
//!
//! The pipeline is: [`sb3`] loads both projects, [`normalize`] rewrites them
//! into a canonical form, [`diff`] produces a severity-ordered report,
//! [`render`] turns report fragments into block layouts, [`llm`] explains
//! each difference, [`repair`] applies accepted fixes, and [`session`]
//! drives the loop until the projects match.

pub mod corpus;
pub mod diff;
pub mod llm;
pub mod normalize;
pub mod render;
pub mod repair;
pub mod sb3;
pub mod session;
