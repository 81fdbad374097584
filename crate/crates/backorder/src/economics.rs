//! The profit function over inventory drivers, misclassification-cost
//! accounting, and constrained profit maximisation over the five cost
//! decision variables.
//!
//! The profit objective is linear and strictly decreasing in each cost
//! wherever its driver sum is positive, so the optimum sits on the boundary
//! of the feasible box. The optimiser therefore requires explicit bounds
//! and surfaces the vertex solution rather than hiding the degeneracy.

use serde::{Deserialize, Serialize};

use crate::dataset::DataTable;
use crate::error::{Error, Result};
use crate::evaluate::ConfusionMatrix;

pub const SALES_COLUMNS: [&str; 4] = ["sales1Month", "sales3Month", "sales6Month", "sales9Month"];
pub const COST_VARIABLES: [&str; 5] = [
    "holdingCost",
    "backorderCost",
    "leadTimeCost",
    "potentialIssueCost",
    "deckRiskCost",
];

/// The five cost decision variables (currency per unit of driver).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub holding_cost: f64,
    pub backorder_cost: f64,
    pub lead_time_cost: f64,
    pub potential_issue_cost: f64,
    pub deck_risk_cost: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams::uniform(1.0)
    }
}

impl CostParams {
    pub fn uniform(value: f64) -> Self {
        CostParams {
            holding_cost: value,
            backorder_cost: value,
            lead_time_cost: value,
            potential_issue_cost: value,
            deck_risk_cost: value,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.holding_cost,
            self.backorder_cost,
            self.lead_time_cost,
            self.potential_issue_cost,
            self.deck_risk_cost,
        ]
    }

    pub fn from_array(values: [f64; 5]) -> Self {
        CostParams {
            holding_cost: values[0],
            backorder_cost: values[1],
            lead_time_cost: values[2],
            potential_issue_cost: values[3],
            deck_risk_cost: values[4],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_array(self.as_array().map(|v| v * factor))
    }
}

/// Per-cost-term currency amounts (cost parameter times driver sum).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub holding: f64,
    pub backorder: f64,
    pub lead_time: f64,
    pub potential_issue: f64,
    pub deck_risk: f64,
}

impl TermBreakdown {
    pub fn sum(&self) -> f64 {
        self.holding + self.backorder + self.lead_time + self.potential_issue + self.deck_risk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitResult {
    pub revenue: f64,
    pub profit: f64,
    pub term_breakdown: TermBreakdown,
    pub optimal_params: CostParams,
    pub iterations: usize,
    pub converged: bool,
}

/// Sum of the four sales columns over the row subset (original values).
pub fn revenue(table: &DataTable, rows: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for name in SALES_COLUMNS {
        total += column_sum(table, rows, name)?;
    }
    Ok(total)
}

fn column_sum(table: &DataTable, rows: &[usize], name: &str) -> Result<f64> {
    let j = table.column_index(name)?;
    let mut sum = 0.0;
    for &i in rows {
        sum += table.value(i, j).ok_or_else(|| Error::MissingValue {
            column: name.to_string(),
            row: i,
        })?;
    }
    Ok(sum)
}

/// Driver sums multiplying each cost variable: inventory level, backorder
/// count, lead time, and the two risk flags.
fn driver_sums(table: &DataTable, rows: &[usize], backorder_indicator: &[u8]) -> Result<[f64; 5]> {
    if backorder_indicator.len() != rows.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: backorder_indicator.len(),
        });
    }
    let backorders = backorder_indicator
        .iter()
        .map(|&b| f64::from(b))
        .sum::<f64>();
    Ok([
        column_sum(table, rows, "nationalInv")?,
        backorders,
        column_sum(table, rows, "leadTime")?,
        column_sum(table, rows, "potentialIssue")?,
        column_sum(table, rows, "deckRisk")?,
    ])
}

/// Profit = revenue minus the five cost terms, with the full breakdown.
/// `backorder_indicator` is any per-row 0/1 vector (actual labels or
/// predictions), aligned with `rows`.
pub fn profit(
    table: &DataTable,
    rows: &[usize],
    params: &CostParams,
    backorder_indicator: &[u8],
) -> Result<ProfitResult> {
    let rev = revenue(table, rows)?;
    let drivers = driver_sums(table, rows, backorder_indicator)?;
    Ok(profit_at(rev, &drivers, params, 0, true))
}

fn profit_at(
    revenue: f64,
    drivers: &[f64; 5],
    params: &CostParams,
    iterations: usize,
    converged: bool,
) -> ProfitResult {
    let c = params.as_array();
    let term_breakdown = TermBreakdown {
        holding: c[0] * drivers[0],
        backorder: c[1] * drivers[1],
        lead_time: c[2] * drivers[2],
        potential_issue: c[3] * drivers[3],
        deck_risk: c[4] * drivers[4],
    };
    ProfitResult {
        revenue,
        profit: revenue - term_breakdown.sum(),
        term_breakdown,
        optimal_params: *params,
        iterations,
        converged,
    }
}

/// Box bounds for one cost variable; infinities mark an unbounded side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Bounds { lower, upper }
    }

    /// The artifact default: nonnegative, unbounded above.
    pub fn nonnegative() -> Self {
        Bounds {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }
}

/// Equality constraints over the cost variables (index into
/// [`COST_VARIABLES`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Fix { variable: usize, value: f64 },
}

const PROJECTED_GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

/// Maximises profit over the cost parameters inside the bound box, subject
/// to equality constraints, by projected gradient ascent with exact line
/// search. The objective is linear, so each step moves straight to the
/// active boundary; convergence is declared when the projected gradient
/// norm falls below 1e-8. Unbounded improving directions are an error
/// naming the variable.
pub fn maximize_profit(
    table: &DataTable,
    rows: &[usize],
    backorder_indicator: &[u8],
    x0: &CostParams,
    bounds: &[Bounds; 5],
    constraints: &[Constraint],
) -> Result<ProfitResult> {
    let rev = revenue(table, rows)?;
    let drivers = driver_sums(table, rows, backorder_indicator)?;

    let mut lower = bounds.map(|b| b.lower);
    let mut upper = bounds.map(|b| b.upper);
    for constraint in constraints {
        let Constraint::Fix { variable, value } = *constraint;
        if variable >= 5 {
            return Err(Error::Argument(format!(
                "constraint names variable {variable}, but there are only 5"
            )));
        }
        if value < lower[variable] || value > upper[variable] {
            return Err(Error::Infeasible(format!(
                "{} fixed at {value} outside its bounds [{}, {}]",
                COST_VARIABLES[variable], lower[variable], upper[variable]
            )));
        }
        lower[variable] = value;
        upper[variable] = value;
    }
    for k in 0..5 {
        if lower[k] > upper[k] {
            return Err(Error::Infeasible(format!(
                "{} has empty bounds [{}, {}]",
                COST_VARIABLES[k], lower[k], upper[k]
            )));
        }
    }

    // gradient of profit with respect to the costs is -drivers
    let gradient: [f64; 5] = drivers.map(|d| -d);
    for k in 0..5 {
        if gradient[k] < 0.0 && lower[k] == f64::NEG_INFINITY {
            return Err(Error::Unbounded {
                variable: COST_VARIABLES[k].to_string(),
            });
        }
        if gradient[k] > 0.0 && upper[k] == f64::INFINITY {
            return Err(Error::Unbounded {
                variable: COST_VARIABLES[k].to_string(),
            });
        }
    }

    let mut point = x0.as_array();
    for k in 0..5 {
        point[k] = point[k].clamp(lower[k], upper[k]);
    }

    let objective =
        |p: &[f64; 5]| profit_at(rev, &drivers, &CostParams::from_array(*p), 0, true).profit;
    let mut iterations = 0;
    let mut converged = false;
    let mut current = objective(&point);
    while iterations < MAX_ITERATIONS {
        // projected gradient: zero where the improving direction is blocked
        let mut projected = [0.0f64; 5];
        for k in 0..5 {
            let g = gradient[k];
            let blocked_low = g < 0.0 && point[k] <= lower[k];
            let blocked_high = g > 0.0 && point[k] >= upper[k];
            if !(blocked_low || blocked_high) {
                projected[k] = g;
            }
        }
        let norm = projected.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < PROJECTED_GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        // exact line search: the objective is linear, so move every free
        // coordinate to its bound in the improving direction
        let mut next = point;
        for k in 0..5 {
            if projected[k] < 0.0 {
                next[k] = lower[k];
            } else if projected[k] > 0.0 {
                next[k] = upper[k];
            }
        }
        let value = objective(&next);
        debug_assert!(value >= current - 1e-9 * current.abs().max(1.0));
        point = next;
        current = value;
    }

    Ok(profit_at(
        rev,
        &drivers,
        &CostParams::from_array(point),
        iterations,
        converged,
    ))
}

/// Misclassification-cost accounting per the asymmetric default weights
/// (false positives cost 10, false negatives 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationCost {
    pub fp_cost: f64,
    pub fn_cost: f64,
    pub total: f64,
}

pub const DEFAULT_FP_COST: f64 = 10.0;
pub const DEFAULT_FN_COST: f64 = 1.0;

/// Total cost = FP * fp_cost + FN * fn_cost, exactly.
pub fn misclassification_cost(
    cm: &ConfusionMatrix,
    fp_cost: f64,
    fn_cost: f64,
) -> Result<MisclassificationCost> {
    if fp_cost < 0.0 || fn_cost < 0.0 {
        return Err(Error::Argument(format!(
            "costs must be nonnegative, got fp_cost {fp_cost}, fn_cost {fn_cost}"
        )));
    }
    Ok(MisclassificationCost {
        fp_cost,
        fn_cost,
        total: cm.fp as f64 * fp_cost + cm.fn_ as f64 * fn_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, ColumnSchema};

    /// A small table with the five driver columns and the sales columns.
    fn driver_table(rows: usize) -> DataTable {
        let mut schema = Vec::new();
        let mut columns = Vec::new();
        for (i, name) in [
            "nationalInv",
            "leadTime",
            "sales1Month",
            "sales3Month",
            "sales6Month",
            "sales9Month",
        ]
        .iter()
        .enumerate()
        {
            schema.push(ColumnSchema::new(name, ColumnKind::Numeric, None));
            columns.push((0..rows).map(|r| (r + i + 1) as f64).collect());
        }
        for name in ["potentialIssue", "deckRisk"] {
            schema.push(ColumnSchema::new(name, ColumnKind::YesNo, None));
            columns.push((0..rows).map(|r| f64::from(r % 2 == 0)).collect());
        }
        schema.push(ColumnSchema::new("wentOnBackorder", ColumnKind::Target, None));
        columns.push((0..rows).map(|r| f64::from(r % 3 == 0)).collect());
        let missing = vec![vec![false; rows]; columns.len()];
        DataTable::new(schema, columns, missing).unwrap()
    }

    #[test]
    fn revenue_is_the_sales_sum() {
        let t = driver_table(1);
        // row 0: sales columns hold 3, 4, 5, 6
        assert_eq!(revenue(&t, &[0]).unwrap(), 18.0);
        assert_eq!(revenue(&t, &[]).unwrap(), 0.0);
    }

    #[test]
    fn revenue_matches_column_sum_oracle() {
        let t = driver_table(37);
        let rows: Vec<usize> = (0..37).collect();
        let fast = revenue(&t, &rows).unwrap();
        let mut slow = 0.0;
        for name in SALES_COLUMNS {
            let j = t.column_index(name).unwrap();
            for &i in &rows {
                slow += t.value(i, j).unwrap();
            }
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn zero_costs_leave_profit_at_revenue() {
        let t = driver_table(10);
        let rows: Vec<usize> = (0..10).collect();
        let indicator = vec![0u8; 10];
        let r = profit(&t, &rows, &CostParams::uniform(0.0), &indicator).unwrap();
        assert_eq!(r.profit, r.revenue);
        assert_eq!(r.term_breakdown.sum(), 0.0);
    }

    #[test]
    fn single_term_example() {
        let t = driver_table(1);
        // nationalInv at row 0 is 1.0; scale holding cost alone
        let params = CostParams {
            holding_cost: 2.0,
            ..CostParams::uniform(0.0)
        };
        let r = profit(&t, &[0], &params, &[0]).unwrap();
        assert_eq!(r.profit, r.revenue - 2.0);
        assert_eq!(r.term_breakdown.holding, 2.0);
    }

    #[test]
    fn breakdown_reconciles_exactly() {
        let t = driver_table(25);
        let rows: Vec<usize> = (0..25).collect();
        let indicator: Vec<u8> = (0..25).map(|i| u8::from(i % 4 == 0)).collect();
        let params = CostParams {
            holding_cost: 0.25,
            backorder_cost: 3.0,
            lead_time_cost: 0.5,
            potential_issue_cost: 2.0,
            deck_risk_cost: 1.5,
        };
        let r = profit(&t, &rows, &params, &indicator).unwrap();
        assert!((r.revenue - r.term_breakdown.sum() - r.profit).abs() <= 1e-9 * r.profit.abs());
    }

    #[test]
    fn profit_interpolates_linearly_in_the_params() {
        let t = driver_table(12);
        let rows: Vec<usize> = (0..12).collect();
        let indicator = vec![1u8; 12];
        let params = CostParams {
            holding_cost: 2.0,
            backorder_cost: 4.0,
            lead_time_cost: 8.0,
            potential_issue_cost: 16.0,
            deck_risk_cost: 32.0,
        };
        let full = profit(&t, &rows, &params, &indicator).unwrap();
        let zero = profit(&t, &rows, &CostParams::uniform(0.0), &indicator).unwrap();
        // powers of two scale exactly in binary floating point
        for alpha in [0.5, 0.25, 0.125] {
            let scaled = profit(&t, &rows, &params.scaled(alpha), &indicator).unwrap();
            let expected = zero.profit + alpha * (full.profit - zero.profit);
            assert_eq!(scaled.profit, expected, "alpha {alpha}");
        }
    }

    #[test]
    fn cost_monotonicity() {
        let t = driver_table(15);
        let rows: Vec<usize> = (0..15).collect();
        let indicator: Vec<u8> = (0..15).map(|i| u8::from(i % 5 == 0)).collect();
        let base = CostParams::uniform(1.0);
        let base_profit = profit(&t, &rows, &base, &indicator).unwrap().profit;
        for k in 0..5 {
            let mut arr = base.as_array();
            arr[k] += 1.0;
            let bumped = profit(&t, &rows, &CostParams::from_array(arr), &indicator).unwrap();
            assert!(bumped.profit <= base_profit, "variable {k}");
        }
    }

    #[test]
    fn nonnegative_bounds_drive_costs_to_zero() {
        let t = driver_table(20);
        let rows: Vec<usize> = (0..20).collect();
        let indicator: Vec<u8> = vec![1; 20];
        let r = maximize_profit(
            &t,
            &rows,
            &indicator,
            &CostParams::uniform(1.0),
            &[Bounds::nonnegative(); 5],
            &[],
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.optimal_params.as_array(), [0.0; 5]);
        assert_eq!(r.profit, r.revenue);
    }

    #[test]
    fn equality_constraint_pins_one_cost() {
        let t = driver_table(20);
        let rows: Vec<usize> = (0..20).collect();
        let indicator: Vec<u8> = vec![1; 20];
        let r = maximize_profit(
            &t,
            &rows,
            &indicator,
            &CostParams::uniform(1.0),
            &[Bounds::nonnegative(); 5],
            &[Constraint::Fix {
                variable: 0,
                value: 1.0,
            }],
        )
        .unwrap();
        assert!(r.converged);
        let inv_sum: f64 = {
            let j = t.column_index("nationalInv").unwrap();
            rows.iter().map(|&i| t.value(i, j).unwrap()).sum()
        };
        assert_eq!(r.optimal_params.holding_cost, 1.0);
        assert_eq!(
            r.optimal_params.as_array()[1..],
            [0.0, 0.0, 0.0, 0.0][..]
        );
        assert!((r.profit - (r.revenue - inv_sum)).abs() < 1e-9);
    }

    #[test]
    fn boxed_optimum_matches_vertex_enumeration() {
        let t = driver_table(30);
        let rows: Vec<usize> = (0..30).collect();
        let indicator: Vec<u8> = (0..30).map(|i| u8::from(i % 2 == 0)).collect();
        let boxes = [Bounds::new(1.0, 2.0); 5];
        let r = maximize_profit(
            &t,
            &rows,
            &indicator,
            &CostParams::uniform(1.5),
            &boxes,
            &[],
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.optimal_params.as_array(), [1.0; 5]);
        // brute force over all 32 corners
        let mut best = f64::NEG_INFINITY;
        for mask in 0..32u32 {
            let corner: [f64; 5] =
                std::array::from_fn(|k| if mask & (1 << k) != 0 { 2.0 } else { 1.0 });
            let p = profit(&t, &rows, &CostParams::from_array(corner), &indicator)
                .unwrap()
                .profit;
            best = best.max(p);
        }
        assert!((r.profit - best).abs() < 1e-8);
    }

    #[test]
    fn unbounded_direction_is_named() {
        let t = driver_table(5);
        let rows: Vec<usize> = (0..5).collect();
        let indicator = vec![0u8; 5];
        let mut bounds = [Bounds::nonnegative(); 5];
        bounds[2] = Bounds::new(f64::NEG_INFINITY, f64::INFINITY);
        let err = maximize_profit(
            &t,
            &rows,
            &indicator,
            &CostParams::uniform(0.0),
            &bounds,
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("leadTimeCost"), "{err}");
    }

    #[test]
    fn infeasible_constraints_rejected() {
        let t = driver_table(5);
        let rows: Vec<usize> = (0..5).collect();
        let indicator = vec![0u8; 5];
        let err = maximize_profit(
            &t,
            &rows,
            &indicator,
            &CostParams::uniform(0.0),
            &[Bounds::nonnegative(); 5],
            &[Constraint::Fix {
                variable: 1,
                value: -2.0,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn misclassification_cost_arithmetic() {
        let cm = ConfusionMatrix::new(0, 0, 0, 10);
        assert_eq!(misclassification_cost(&cm, 10.0, 1.0).unwrap().total, 0.0);

        // counts at full-dataset scale with the default weights
        let cm = ConfusionMatrix::new(1600, 17506, 180, 190_429);
        let c = misclassification_cost(&cm, DEFAULT_FP_COST, DEFAULT_FN_COST).unwrap();
        assert_eq!(c.total, 175_240.0);

        // doubling both costs doubles the total exactly
        let doubled = misclassification_cost(&cm, 20.0, 2.0).unwrap();
        assert_eq!(doubled.total, 2.0 * c.total);

        assert!(misclassification_cost(&cm, -1.0, 1.0).is_err());
    }

    #[test]
    fn missing_driver_column_is_an_error() {
        let schema = vec![
            ColumnSchema::new("sales1Month", ColumnKind::Numeric, None),
            ColumnSchema::new("wentOnBackorder", ColumnKind::Target, None),
        ];
        let t = DataTable::new(
            schema,
            vec![vec![1.0, 2.0], vec![0.0, 1.0]],
            vec![vec![false; 2]; 2],
        )
        .unwrap();
        assert!(revenue(&t, &[0]).is_err());
        assert!(profit(&t, &[0], &CostParams::uniform(0.0), &[0]).is_err());
    }
}
