//! SQL subset: lexer, parser, parameter binding, analysis and workload scripts.

pub mod analyze;
pub mod ast;
pub mod bind;
pub mod lexer;
pub mod parser;
pub mod workload;

pub use analyze::{analyze, analyze_query, BoundQuery, BoundStatement, Catalog};
pub use bind::{bind, BindParams};
pub use parser::{is_plain_identifier, parse, parse_command, parse_query, Command};
pub use workload::{parse_workload, WorkloadScript};
