use std::fmt;

use serde::Serialize;

use crate::time::Duration;

/// A 1-based source position. Positions never take part in equality, so a
/// model re-parsed from printed text compares equal to the original.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Loc {
    pub line: u32,
    pub column: u32,
}

impl Loc {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl PartialEq for Loc {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Model {
    pub entities: Vec<Entity>,
    pub datasources: Vec<Datasource>,
    pub kpis: Vec<KpiDef>,
}

impl Model {
    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn datasource(&self, name: &str) -> Option<&Datasource> {
        self.datasources.iter().find(|d| d.name == name)
    }

    pub fn kpi(&self, name: &str) -> Option<&KpiDef> {
        self.kpis.iter().find(|k| k.name == name)
    }

    /// Entity backing a datasource.
    pub fn datasource_entity(&self, datasource: &str) -> Option<&Entity> {
        self.datasource(datasource).and_then(|d| self.entity(&d.entity))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entity {
    pub name: String,
    pub fields: Vec<Field>,
    #[serde(skip)]
    pub loc: Loc,
}

impl Entity {
    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// The first datetime field, which acts as the time axis.
    pub fn time_field(&self) -> Option<&Field> {
        self.fields.iter().find(|f| f.kind == FieldKind::Datetime)
    }

    pub fn numeric_fields(&self) -> impl Iterator<Item = &Field> {
        self.fields.iter().filter(|f| f.kind.is_numeric())
    }

    pub fn categorical_fields(&self) -> impl Iterator<Item = &Field> {
        self.fields.iter().filter(|f| f.kind.is_categorical())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub name: String,
    pub kind: FieldKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub optional: bool,
    #[serde(skip)]
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "type", content = "values")]
pub enum FieldKind {
    String,
    Int,
    Float,
    Bool,
    Datetime,
    Enum(Vec<String>),
}

impl FieldKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, FieldKind::Int | FieldKind::Float)
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, FieldKind::String | FieldKind::Enum(_))
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            FieldKind::String => "string",
            FieldKind::Int => "int",
            FieldKind::Float => "float",
            FieldKind::Bool => "bool",
            FieldKind::Datetime => "datetime",
            FieldKind::Enum(_) => "enum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Datasource {
    pub name: String,
    pub entity: String,
    #[serde(skip)]
    pub loc: Loc,
    #[serde(skip)]
    pub entity_loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiDef {
    pub name: String,
    pub source: String,
    pub expr: Expr,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Duration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(skip)]
    pub locs: KpiLocs,
}

/// Positions of individual KPI attributes, for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KpiLocs {
    pub name: Loc,
    pub source: Loc,
    pub window: Loc,
    pub group_by: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Target {
    pub cmp: Comparator,
    pub bound: f64,
}

impl Target {
    pub fn holds(&self, value: f64) -> bool {
        self.cmp.holds(value, self.bound)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.cmp, self.bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "==")]
    Eq,
}

impl Comparator {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Comparator::Le => value <= bound,
            Comparator::Ge => value >= bound,
            Comparator::Lt => value < bound,
            Comparator::Gt => value > bound,
            Comparator::Eq => value == bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Eq => "==",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Sum,
    Avg,
    Min,
    Max,
    First,
    Last,
}

impl AggFn {
    pub const ALL: [AggFn; 6] = [
        AggFn::Sum,
        AggFn::Avg,
        AggFn::Min,
        AggFn::Max,
        AggFn::First,
        AggFn::Last,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Sum => "sum",
            AggFn::Avg => "avg",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::First => "first",
            AggFn::Last => "last",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "node")]
pub enum Expr {
    Number {
        value: f64,
    },
    Agg {
        func: AggFn,
        field: String,
        #[serde(skip)]
        loc: Loc,
    },
    Count,
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn number(value: f64) -> Self {
        Expr::Number { value }
    }

    pub fn agg(func: AggFn, field: impl Into<String>) -> Self {
        Expr::Agg {
            func,
            field: field.into(),
            loc: Loc::default(),
        }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Visits every aggregate call as `(func, field, loc)`.
    pub fn for_each_agg<'a>(&'a self, f: &mut impl FnMut(AggFn, &'a str, Loc)) {
        match self {
            Expr::Agg { func, field, loc } => f(*func, field, *loc),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.for_each_agg(f);
                rhs.for_each_agg(f);
            }
            Expr::Number { .. } | Expr::Count => {}
        }
    }
}
