pub mod cert;
pub mod cli;
pub mod error;
pub mod frontends;
pub mod io;
pub mod kkt;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod validate;
