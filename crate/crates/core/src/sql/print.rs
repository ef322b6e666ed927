//! Rendering basic queries back to SQL text.

use super::basic::*;
use crate::schema::Schema;

/// Renders a query. `var` names template variables (e.g. `?0` or `*`).
pub fn to_sql(q: &BasicQuery, schema: &Schema, var: &dyn Fn(u32) -> String) -> String {
    q.blocks
        .iter()
        .map(|b| block_sql(b, schema, var))
        .collect::<Vec<_>>()
        .join(" UNION ")
}

/// Renders a closed or context-parameterized query; variables print as `?k`.
pub fn query_sql(q: &BasicQuery, schema: &Schema) -> String {
    to_sql(q, schema, &|v| format!("?{v}"))
}

fn block_sql(b: &SelectBlock, schema: &Schema, var: &dyn Fn(u32) -> String) -> String {
    let qualify = b.from.len() > 1;
    let col = |r: ColumnRef| {
        let name = b.column_name(schema, r);
        if qualify {
            format!("{}.{}", b.from[r.instance].alias, name)
        } else {
            name.to_string()
        }
    };
    let operand = |o: &Operand| match o {
        Operand::Column(r) => col(*r),
        Operand::Const(v) => v.to_sql(),
        Operand::Param(p) => format!("?{p}"),
        Operand::Var(k) => var(*k),
    };
    let mut out = String::from("SELECT ");
    if b.projects_all(schema) {
        out.push('*');
    } else {
        let items: Vec<String> = b
            .projection
            .iter()
            .map(|c| match &c.operand {
                Operand::Column(r) if b.column_name(schema, *r) == c.name => col(*r),
                o => format!("{} AS {}", operand(o), quote_ident(&c.name)),
            })
            .collect();
        out.push_str(&items.join(", "));
    }
    out.push_str(" FROM ");
    let tables: Vec<String> = b
        .from
        .iter()
        .map(|i| if i.alias == i.table { i.table.clone() } else { format!("{} {}", i.table, i.alias) })
        .collect();
    out.push_str(&tables.join(", "));
    if b.predicate != Predicate::True {
        out.push_str(" WHERE ");
        out.push_str(&pred_sql(&b.predicate, &operand, true));
    }
    out
}

fn quote_ident(s: &str) -> String {
    if s.chars().all(|c| c.is_alphanumeric() || c == '_') && !s.is_empty() {
        s.to_string()
    } else {
        format!("\"{s}\"")
    }
}

fn pred_sql(p: &Predicate, operand: &dyn Fn(&Operand) -> String, top: bool) -> String {
    match p {
        Predicate::True => "TRUE".into(),
        Predicate::False => "FALSE".into(),
        Predicate::And(ps) => {
            let s = ps.iter().map(|q| pred_sql(q, operand, false)).collect::<Vec<_>>().join(" AND ");
            if top {
                s
            } else {
                format!("({s})")
            }
        }
        Predicate::Or(ps) => {
            let s = ps.iter().map(|q| pred_sql(q, operand, false)).collect::<Vec<_>>().join(" OR ");
            format!("({s})")
        }
        Predicate::Cmp(op, a, b) => format!("{} {} {}", operand(a), op.symbol(), operand(b)),
        Predicate::In { operand: o, list, negated } => format!(
            "{} {}IN ({})",
            operand(o),
            if *negated { "NOT " } else { "" },
            list.iter().map(operand).collect::<Vec<_>>().join(", ")
        ),
        Predicate::IsNull { operand: o, negated } => {
            format!("{} IS {}NULL", operand(o), if *negated { "NOT " } else { "" })
        }
    }
}
