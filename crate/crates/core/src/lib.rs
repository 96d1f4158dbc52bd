pub mod broadcast;
pub mod cli;
pub mod corpus;
pub mod election;
pub mod graph;
pub mod oracle;
pub mod simcore;
