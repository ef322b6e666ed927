//! SQL frontend: parsing, resolution, basic-query certification and rewriting.

pub mod ast;
pub mod basic;
pub mod classify;
pub mod lexer;
pub mod parser;
pub mod print;
pub mod resolve;
pub mod rewrite;
pub mod split;

use std::collections::BTreeMap;

pub use ast::{CmpOp, QueryAst};
pub use basic::{BasicQuery, Certificate};
pub use parser::{parse, parse_with_mode, ParseMode};
pub use rewrite::{classify_basic, rewrite_to_basic, Classification, RewriteResult};
pub use split::split_in;

use crate::schema::Schema;
use crate::value::ColumnType;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unsupported SQL feature: {0}")]
    UnsupportedFeature(String),
    #[error("{0}")]
    Resolution(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("query has {expected} placeholders but {got} parameters were given")]
    ParamCount { expected: usize, got: usize },
    #[error("cannot split: {0}")]
    NotSplittable(String),
}

/// Parses and rewrites application SQL into a basic query.
pub fn to_basic(
    sql: &str,
    params: &[crate::value::Value],
    schema: &Schema,
    ctx_types: &BTreeMap<String, ColumnType>,
) -> Result<RewriteResult, SqlError> {
    let ast = parse(sql, params)?;
    rewrite_to_basic(&ast, schema, ctx_types, ParseMode::Application)
}

/// Parses a view definition. Views must rewrite exactly.
pub fn view_to_basic(
    sql: &str,
    schema: &Schema,
    ctx_types: &BTreeMap<String, ColumnType>,
) -> Result<BasicQuery, SqlError> {
    let ast = parse_with_mode(sql, &[], ParseMode::View)?;
    let r = rewrite_to_basic(&ast, schema, ctx_types, ParseMode::View)?;
    if !r.exact {
        return Err(SqlError::UnsupportedFeature("view rewrites only approximately".into()));
    }
    Ok(r.query)
}

/// Resolves a query used only for set membership (constraint sides), without
/// requiring a duplicate-freeness certificate.
pub fn resolve_set_query(
    sql: &str,
    schema: &Schema,
    ctx_types: &BTreeMap<String, ColumnType>,
    mode: ParseMode,
) -> Result<BasicQuery, SqlError> {
    let ast = parse_with_mode(sql, &[], mode)?;
    if ast.limit.is_some() {
        return Err(SqlError::UnsupportedFeature("LIMIT in a set query".into()));
    }
    let mut resolver = resolve::Resolver::new(schema, ctx_types, mode);
    let mut blocks = Vec::new();
    for s in &ast.selects {
        let rs = resolver.resolve_select(s)?;
        let mut conj = vec![rs.predicate];
        for j in rs.joins {
            if j.kind != ast::JoinKind::Inner {
                return Err(SqlError::UnsupportedFeature("LEFT JOIN in a set query".into()));
            }
            conj.push(j.on);
        }
        let projection = rs
            .items
            .into_iter()
            .map(|i| match i {
                resolve::ResolvedItem::Plain(c) => Ok(c),
                resolve::ResolvedItem::Sum(_) => Err(SqlError::UnsupportedFeature("SUM in a set query".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        blocks.push(basic::SelectBlock { from: rs.from, projection, predicate: basic::Predicate::and(conj) });
    }
    let column_types = basic::output_types(&blocks[0], schema);
    for b in &blocks[1..] {
        if basic::output_types(b, schema) != column_types {
            return Err(SqlError::Type("UNION branches have different column types".into()));
        }
    }
    Ok(BasicQuery { blocks, certificate: Certificate::SetSemantics, column_types })
}
