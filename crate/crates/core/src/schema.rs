//! Schemas, constraints, view policies and request contexts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sql::basic::{BasicQuery, Certificate, ColumnRef, Operand, OutputColumn, Predicate, SelectBlock, TableInstance};
use crate::sql::{self, CmpOp, ParseMode, SqlError};
use crate::value::{ColumnType, Value};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("cannot read policy: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed policy: {0}")]
    Parse(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("view {view} is not a basic query: {reason}")]
    NonBasicView { view: String, reason: String },
    #[error("unbound context parameter ?{0}")]
    UnboundParameter(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
    pub nullable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<Column>,
    pub primary_key: Vec<usize>,
    pub unique_keys: Vec<Vec<usize>>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Keys whose columns are all non-nullable: the primary key first, then unique keys.
    pub fn strict_keys(&self) -> impl Iterator<Item = &[usize]> {
        std::iter::once(self.primary_key.as_slice()).chain(
            self.unique_keys
                .iter()
                .filter(|k| k.iter().all(|&c| !self.columns[c].nullable))
                .map(|k| k.as_slice()),
        )
    }

    /// All uniqueness constraints, including nullable unique keys.
    pub fn all_keys(&self) -> impl Iterator<Item = &[usize]> {
        std::iter::once(self.primary_key.as_slice()).chain(self.unique_keys.iter().map(|k| k.as_slice()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_columns: Vec<usize>,
    pub to_table: String,
    pub to_columns: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl Schema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Primary-key and unique-key uniqueness for one table.
    PrimaryKeyUnique { table: String },
    ForeignKey(ForeignKey),
    Containment { lhs: BasicQuery, rhs: BasicQuery, lhs_sql: String, rhs_sql: String },
}

impl Constraint {
    /// The containment form `lhs ⊆ rhs` of this constraint.
    ///
    /// Key uniqueness becomes "pairs of rows that agree on a key are the same row
    /// twice"; one containment per key.
    pub fn as_containments(&self, schema: &Schema) -> Vec<(BasicQuery, BasicQuery)> {
        match self {
            Constraint::Containment { lhs, rhs, .. } => vec![(lhs.clone(), rhs.clone())],
            Constraint::ForeignKey(fk) => {
                let from = TableInstance { table: fk.from_table.clone(), alias: fk.from_table.clone() };
                let to = TableInstance { table: fk.to_table.clone(), alias: fk.to_table.clone() };
                let ft = schema.table(&fk.from_table).expect("validated");
                let tt = schema.table(&fk.to_table).expect("validated");
                let col = |c: usize| ColumnRef { instance: 0, column: c };
                let lhs = SelectBlock {
                    from: vec![from],
                    projection: fk
                        .from_columns
                        .iter()
                        .map(|&c| OutputColumn { name: ft.columns[c].name.clone(), operand: Operand::Column(col(c)) })
                        .collect(),
                    predicate: Predicate::and(
                        fk.from_columns
                            .iter()
                            .map(|&c| Predicate::IsNull { operand: Operand::Column(col(c)), negated: true })
                            .collect(),
                    ),
                };
                let rhs = SelectBlock {
                    from: vec![to],
                    projection: fk
                        .to_columns
                        .iter()
                        .map(|&c| OutputColumn { name: tt.columns[c].name.clone(), operand: Operand::Column(col(c)) })
                        .collect(),
                    predicate: Predicate::True,
                };
                vec![(
                    BasicQuery::single(lhs, Certificate::SetSemantics, schema),
                    BasicQuery::single(rhs, Certificate::SetSemantics, schema),
                )]
            }
            Constraint::PrimaryKeyUnique { table } => {
                let t = schema.table(table).expect("validated");
                let n = t.columns.len();
                let inst = |a: &str| TableInstance { table: t.name.clone(), alias: a.to_string() };
                let out = |i: usize, c: usize| OutputColumn {
                    name: t.columns[c].name.clone(),
                    operand: Operand::Column(ColumnRef { instance: i, column: c }),
                };
                t.all_keys()
                    .map(|key| {
                        let lhs = SelectBlock {
                            from: vec![inst("a"), inst("b")],
                            projection: (0..n).map(|c| out(0, c)).chain((0..n).map(|c| out(1, c))).collect(),
                            predicate: Predicate::and(
                                key.iter()
                                    .map(|&c| {
                                        Predicate::Cmp(
                                            CmpOp::Eq,
                                            Operand::Column(ColumnRef { instance: 0, column: c }),
                                            Operand::Column(ColumnRef { instance: 1, column: c }),
                                        )
                                    })
                                    .collect(),
                            ),
                        };
                        let rhs = SelectBlock {
                            from: vec![inst("a")],
                            projection: (0..n).map(|c| out(0, c)).chain((0..n).map(|c| out(0, c))).collect(),
                            predicate: Predicate::True,
                        };
                        (
                            BasicQuery::single(lhs, Certificate::SetSemantics, schema),
                            BasicQuery::single(rhs, Certificate::SetSemantics, schema),
                        )
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub name: String,
    pub sql: String,
    pub query: BasicQuery,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextParam {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyBundle {
    pub schema: Schema,
    pub constraints: Vec<Constraint>,
    pub views: Vec<View>,
    pub context: Vec<ContextParam>,
}

pub const NOW: &str = "NOW";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RequestContext {
    pub params: BTreeMap<String, Value>,
}

impl RequestContext {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.params.get(name)
    }
}

impl PolicyBundle {
    pub fn context_types(&self) -> BTreeMap<String, ColumnType> {
        self.context.iter().map(|p| (p.name.clone(), p.ty)).collect()
    }

    /// Builds a request context, coercing values to declared types and filling `NOW`.
    pub fn make_context(&self, raw: &BTreeMap<String, Value>) -> Result<RequestContext, PolicyError> {
        let mut params = BTreeMap::new();
        for p in &self.context {
            let v = match raw.iter().find(|(k, _)| k.eq_ignore_ascii_case(&p.name)) {
                Some((_, v)) => v
                    .clone()
                    .coerce(p.ty)
                    .map_err(|e| PolicyError::Parse(format!("context ?{}: {e}", p.name)))?,
                None if p.name == NOW => Value::Time(chrono::Utc::now().timestamp()),
                None => return Err(PolicyError::UnboundParameter(p.name.clone())),
            };
            params.insert(p.name.clone(), v);
        }
        Ok(RequestContext { params })
    }

    /// Names of context parameters that some view refers to.
    pub fn referenced_params(&self) -> Vec<String> {
        let mut used = std::collections::BTreeSet::new();
        for v in &self.views {
            used.extend(v.query.params());
        }
        self.context.iter().filter(|p| used.contains(&p.name)).map(|p| p.name.clone()).collect()
    }

    pub fn from_json_str(text: &str) -> Result<PolicyBundle, PolicyError> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))?;
        PolicyBundle::from_file(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    fn from_file(file: PolicyFile) -> Result<PolicyBundle, PolicyError> {
        if let Some(v) = file.format_version {
            if v != FORMAT_VERSION {
                return Err(PolicyError::Parse(format!("unsupported format_version {v}")));
            }
        }
        let mut tables = Vec::new();
        for t in &file.tables {
            if tables.iter().any(|x: &TableDef| x.name.eq_ignore_ascii_case(&t.name)) {
                return Err(PolicyError::Parse(format!("duplicate table {}", t.name)));
            }
            let mut columns: Vec<Column> = Vec::new();
            for c in &t.columns {
                if columns.iter().any(|x| x.name.eq_ignore_ascii_case(&c.name)) {
                    return Err(PolicyError::Parse(format!("duplicate column {}.{}", t.name, c.name)));
                }
                columns.push(Column { name: c.name.clone(), ty: c.ty, nullable: c.nullable.unwrap_or(true) });
            }
            let lookup = |name: &String| {
                columns
                    .iter()
                    .position(|c| c.name.eq_ignore_ascii_case(name))
                    .ok_or_else(|| PolicyError::Resolution(format!("unknown column {}.{}", t.name, name)))
            };
            if t.primary_key.is_empty() {
                return Err(PolicyError::Parse(format!("table {} has no primary key", t.name)));
            }
            let primary_key = t.primary_key.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
            let unique_keys = t
                .unique_keys
                .iter()
                .map(|k| k.iter().map(lookup).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            for &c in &primary_key {
                columns[c].nullable = false;
            }
            tables.push(TableDef { name: t.name.clone(), columns, primary_key, unique_keys });
        }
        let mut schema = Schema { tables, foreign_keys: Vec::new() };

        let mut context: Vec<ContextParam> = file
            .context
            .iter()
            .map(|p| ContextParam { name: p.name.clone(), ty: p.ty })
            .collect();
        if !context.iter().any(|p| p.name == NOW) {
            context.push(ContextParam { name: NOW.to_string(), ty: ColumnType::Timestamp });
        }
        let ctx_types: BTreeMap<String, ColumnType> = context.iter().map(|p| (p.name.clone(), p.ty)).collect();

        let mut constraints: Vec<Constraint> = schema
            .tables
            .iter()
            .map(|t| Constraint::PrimaryKeyUnique { table: t.name.clone() })
            .collect();
        let mut pending_containments = Vec::new();
        for c in &file.constraints {
            match c {
                ConstraintSpec::ForeignKey { from, to } => {
                    let resolve = |r: &ColumnsRef| -> Result<(String, Vec<usize>), PolicyError> {
                        let t = schema
                            .table(&r.table)
                            .ok_or_else(|| PolicyError::Resolution(format!("unknown table {}", r.table)))?;
                        let cols = r
                            .columns
                            .iter()
                            .map(|n| {
                                t.column_index(n)
                                    .ok_or_else(|| PolicyError::Resolution(format!("unknown column {}.{}", r.table, n)))
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok((t.name.clone(), cols))
                    };
                    let (from_table, from_columns) = resolve(from)?;
                    let (to_table, to_columns) = resolve(to)?;
                    if from_columns.len() != to_columns.len() || from_columns.is_empty() {
                        return Err(PolicyError::Parse("foreign key column lists differ in length".into()));
                    }
                    let fk = ForeignKey { from_table, from_columns, to_table, to_columns };
                    schema.foreign_keys.push(fk.clone());
                    constraints.push(Constraint::ForeignKey(fk));
                }
                ConstraintSpec::Containment { lhs, rhs } => pending_containments.push((lhs.clone(), rhs.clone())),
            }
        }
        for (lhs_sql, rhs_sql) in pending_containments {
            let parse_side = |sql: &str| -> Result<BasicQuery, PolicyError> {
                let q = sql::resolve_set_query(sql, &schema, &BTreeMap::new(), ParseMode::Constraint)
                    .map_err(|e| PolicyError::Resolution(format!("constraint `{sql}`: {e}")))?;
                Ok(q)
            };
            let lhs = parse_side(&lhs_sql)?;
            let rhs = parse_side(&rhs_sql)?;
            if lhs.column_types != rhs.column_types {
                return Err(PolicyError::Resolution(format!(
                    "containment sides have different column types: `{lhs_sql}` vs `{rhs_sql}`"
                )));
            }
            constraints.push(Constraint::Containment { lhs, rhs, lhs_sql, rhs_sql });
        }

        let mut views = Vec::new();
        for v in &file.views {
            let query = sql::view_to_basic(&v.sql, &schema, &ctx_types).map_err(|e| match e {
                SqlError::Resolution(m) | SqlError::Type(m) => PolicyError::Resolution(format!("view {}: {m}", v.name)),
                SqlError::Syntax(m) => PolicyError::Parse(format!("view {}: {m}", v.name)),
                other => PolicyError::NonBasicView { view: v.name.clone(), reason: other.to_string() },
            })?;
            views.push(View { name: v.name.clone(), sql: v.sql.clone(), query });
        }
        Ok(PolicyBundle { schema, constraints, views, context })
    }

    fn to_file(&self) -> PolicyFile {
        let tables = self
            .schema
            .tables
            .iter()
            .map(|t| TableSpec {
                name: t.name.clone(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnSpec { name: c.name.clone(), ty: c.ty, nullable: Some(c.nullable) })
                    .collect(),
                primary_key: t.primary_key.iter().map(|&c| t.columns[c].name.clone()).collect(),
                unique_keys: t
                    .unique_keys
                    .iter()
                    .map(|k| k.iter().map(|&c| t.columns[c].name.clone()).collect())
                    .collect(),
            })
            .collect();
        let names = |table: &str, cols: &[usize]| {
            let t = self.schema.table(table).expect("validated");
            cols.iter().map(|&c| t.columns[c].name.clone()).collect()
        };
        let constraints = self
            .constraints
            .iter()
            .filter_map(|c| match c {
                Constraint::PrimaryKeyUnique { .. } => None,
                Constraint::ForeignKey(fk) => Some(ConstraintSpec::ForeignKey {
                    from: ColumnsRef { table: fk.from_table.clone(), columns: names(&fk.from_table, &fk.from_columns) },
                    to: ColumnsRef { table: fk.to_table.clone(), columns: names(&fk.to_table, &fk.to_columns) },
                }),
                Constraint::Containment { lhs_sql, rhs_sql, .. } => {
                    Some(ConstraintSpec::Containment { lhs: lhs_sql.clone(), rhs: rhs_sql.clone() })
                }
            })
            .collect();
        PolicyFile {
            format_version: Some(FORMAT_VERSION),
            tables,
            constraints,
            views: self.views.iter().map(|v| ViewSpec { name: v.name.clone(), sql: v.sql.clone() }).collect(),
            context: self.context.iter().map(|p| ParamSpec { name: p.name.clone(), ty: p.ty }).collect(),
        }
    }
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<PolicyBundle, PolicyError> {
    let text = std::fs::read_to_string(path)?;
    PolicyBundle::from_json_str(&text)
}

/// Binds the context parameters of a view, yielding V^ctx.
pub fn instantiate_view(view: &View, ctx: &RequestContext) -> Result<BasicQuery, PolicyError> {
    view.query.bind_params(&ctx.params).map_err(PolicyError::UnboundParameter)
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format_version: Option<u32>,
    tables: Vec<TableSpec>,
    #[serde(default)]
    constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    views: Vec<ViewSpec>,
    #[serde(default)]
    context: Vec<ParamSpec>,
}

#[derive(Serialize, Deserialize)]
struct TableSpec {
    name: String,
    columns: Vec<ColumnSpec>,
    primary_key: Vec<String>,
    #[serde(default)]
    unique_keys: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ColumnSpec {
    name: String,
    #[serde(rename = "type")]
    ty: ColumnType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nullable: Option<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ConstraintSpec {
    ForeignKey { from: ColumnsRef, to: ColumnsRef },
    Containment { lhs: String, rhs: String },
}

#[derive(Serialize, Deserialize)]
struct ColumnsRef {
    table: String,
    columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ViewSpec {
    name: String,
    sql: String,
}

#[derive(Serialize, Deserialize)]
struct ParamSpec {
    name: String,
    #[serde(rename = "type")]
    ty: ColumnType,
}
