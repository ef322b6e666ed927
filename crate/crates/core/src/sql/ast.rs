//! Unresolved parse tree of the supported SQL subset.

use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryAst {
    pub selects: Vec<SelectAst>,
    pub order_by: Vec<ColumnName>,
    pub limit: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectAst {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub where_clause: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FromItem {
    pub base: TableRef,
    pub joins: Vec<Join>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Join {
    pub kind: JoinKind,
    pub table: TableRef,
    pub on: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    pub fn visible_name(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelectItem {
    Star,
    QualifiedStar(String),
    Operand { operand: AstOperand, alias: Option<String> },
    Sum { column: ColumnName, alias: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnName {
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColumnName {
    pub fn bare(name: &str) -> Self {
        ColumnName { qualifier: None, name: name.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AstOperand {
    Column(ColumnName),
    Literal(Value),
    Param(String),
    Var(u32),
    /// `*` in operand position of template SQL: a fresh single-use variable.
    Wildcard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Cmp(CmpOp, AstOperand, AstOperand),
    InList { operand: AstOperand, list: Vec<AstOperand>, negated: bool },
    InSubquery { operand: AstOperand, query: Box<QueryAst>, negated: bool },
    IsNull { operand: AstOperand, negated: bool },
    /// A bare boolean operand used as a predicate.
    Truth(AstOperand),
    Const(bool),
}
