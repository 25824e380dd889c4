//! Column tables to model inputs, with the schema each model expects.

use nalgebra::DMatrix;

use super::table::{ColumnTable, ColumnType, Schema};
use crate::error::{Error, Result};
use crate::model::{CoxData, GlmmData, PoissonAggregateData};

/// Columns named `x1`, `x2`, ... in header order.
fn covariates(table: &ColumnTable) -> Vec<String> {
    table
        .names()
        .iter()
        .filter(|n| n.len() > 1 && n.starts_with('x') && n[1..].chars().all(|c| c.is_ascii_digit()))
        .cloned()
        .collect()
}

fn covariate_matrix(table: &ColumnTable, rows: usize) -> Result<DMatrix<f64>> {
    let names = covariates(table);
    let cols = names.iter().map(|n| table.real(n)).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]))
}

pub fn gaussian_schema() -> Schema {
    Schema::new(&[("y", ColumnType::Real)])
}

pub fn glmm_schema() -> Schema {
    Schema::new(&[
        ("y", ColumnType::Integer),
        ("state", ColumnType::Category),
        ("town", ColumnType::Category),
    ])
    .with_default(ColumnType::Real)
}

pub fn cox_schema() -> Schema {
    Schema::new(&[("time", ColumnType::Real), ("event", ColumnType::Integer)])
        .with_optional("group", ColumnType::Category)
        .with_default(ColumnType::Real)
}

pub fn poisson_schema() -> Schema {
    Schema::new(&[
        ("region", ColumnType::Integer),
        ("cell", ColumnType::Integer),
        ("population", ColumnType::Real),
        ("y", ColumnType::Integer),
    ])
    .with_default(ColumnType::Real)
}

pub fn gaussian_response(table: &ColumnTable) -> Result<Vec<f64>> {
    table.real("y")
}

pub fn glmm_data(table: &ColumnTable) -> Result<GlmmData> {
    let n = table.nrows();
    let (state, state_levels) = table.category("state")?;
    let (town, town_levels) = table.category("town")?;
    Ok(GlmmData {
        y: table.real("y")?,
        x: covariate_matrix(table, n)?,
        group1: state.to_vec(),
        group2: town.to_vec(),
        d1: state_levels.len(),
        d2: town_levels.len(),
    })
}

/// Reads `time`, `event` (1 for an observed event), covariates `x1..` and,
/// with `frailty`, the `group` column.
pub fn cox_data(table: &ColumnTable, frailty: bool) -> Result<CoxData> {
    let n = table.nrows();
    let event = table.real("event")?;
    if let Some(i) = event.iter().position(|&e| e != 0.0 && e != 1.0) {
        return Err(Error::ParseCell {
            row: i + 1,
            column: "event".into(),
            value: event[i].to_string(),
            reason: "expected 0 or 1".into(),
        });
    }
    let (group, n_groups) = if frailty {
        let (codes, levels) = table.category("group")?;
        (Some(codes.to_vec()), levels.len())
    } else {
        (None, 0)
    };
    Ok(CoxData {
        time: table.real("time")?,
        censored: event.iter().map(|&e| e == 0.0).collect(),
        x: covariate_matrix(table, n)?,
        group,
        n_groups,
    })
}

/// Groups the long table by region in order of first appearance. Cell ids
/// are used as given; covariates are taken from each cell's first row.
pub fn poisson_data(table: &ColumnTable, intercept: bool) -> Result<PoissonAggregateData> {
    let region = table.real("region")?;
    let cell = table.real("cell")?;
    let pop = table.real("population")?;
    let y = table.real("y")?;
    let names = covariates(table);
    let xcols = names.iter().map(|n| table.real(n)).collect::<Result<Vec<_>>>()?;

    let to_index = |v: f64, row: usize, column: &str| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::ParseCell {
                row: row + 1,
                column: column.into(),
                value: v.to_string(),
                reason: "expected a nonnegative integer".into(),
            })
        }
    };
    let mut region_ids: Vec<usize> = Vec::new();
    let mut counts = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut pops: Vec<Vec<f64>> = Vec::new();
    let mut n_cells = 0;
    for r in 0..table.nrows() {
        let id = to_index(region[r], r, "region")?;
        let c = to_index(cell[r], r, "cell")?;
        n_cells = n_cells.max(c + 1);
        let slot = match region_ids.iter().position(|&x| x == id) {
            Some(s) => {
                if counts[s] != y[r] {
                    return Err(Error::ParseCell {
                        row: r + 1,
                        column: "y".into(),
                        value: y[r].to_string(),
                        reason: format!("region {id} already has count {}", counts[s]),
                    });
                }
                s
            }
            None => {
                region_ids.push(id);
                counts.push(y[r]);
                cells.push(Vec::new());
                pops.push(Vec::new());
                region_ids.len() - 1
            }
        };
        cells[slot].push(c);
        pops[slot].push(pop[r]);
    }
    let mut x_cells = DMatrix::zeros(n_cells, xcols.len());
    let mut seen = vec![false; n_cells];
    for r in 0..table.nrows() {
        let c = cell[r] as usize;
        if !seen[c] {
            seen[c] = true;
            for (j, col) in xcols.iter().enumerate() {
                x_cells[(c, j)] = col[r];
            }
        }
    }
    Ok(PoissonAggregateData {
        y: counts,
        cells,
        populations: pops,
        n_cells,
        x_cells,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io_sim::sim::{simulate_bernoulli_glmm, simulate_cox, simulate_poisson_aggregate};
    use crate::io_sim::table::read_csv_from;

    fn round_trip(table: &ColumnTable, schema: &Schema) -> ColumnTable {
        let mut buf = Vec::new();
        table.write_csv_to(&mut buf).unwrap();
        read_csv_from(buf.as_slice(), schema).unwrap()
    }

    #[test]
    fn glmm_table_to_data() {
        let t = simulate_bernoulli_glmm(1, 200, 3, 9, &[0.1, 0.5, -0.5], 0.5, 0.5).unwrap();
        let back = round_trip(&t.table, &glmm_schema());
        let d = glmm_data(&back).unwrap();
        assert_eq!(d.x.ncols(), 2);
        assert_eq!(d.d1, 3);
        assert!(d.d2 <= 9);
        assert_eq!(d.y.len(), 200);
    }

    #[test]
    fn cox_table_to_data() {
        let t = simulate_cox(2, 40, &[0.3, -0.2], 0.5, 3, 0.2).unwrap();
        let back = round_trip(&t.table, &cox_schema());
        let d = cox_data(&back, true).unwrap();
        assert_eq!(d.n_groups, 3);
        assert_eq!(d.x.ncols(), 2);
        assert!(cox_data(&back, false).unwrap().group.is_none());
        let none = simulate_cox(2, 40, &[0.3], 0.0, 0, 0.2).unwrap();
        assert!(matches!(cox_data(&none.table, true), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn poisson_table_to_data() {
        let t = simulate_poisson_aggregate(3, 30, 2, 3, &[], 1.0).unwrap();
        let d = poisson_data(&round_trip(&t.table, &poisson_schema()), false).unwrap();
        assert_eq!(d.y.len(), 30);
        assert_eq!(d.n_cells, 3);
        assert_eq!(d.cells[1], vec![2, 0]);
        assert_eq!(d.x_cells.ncols(), 0);
    }

    #[test]
    fn inconsistent_region_counts() {
        let csv = "region,cell,population,y\n0,0,5,3\n0,1,6,4\n";
        let t = read_csv_from(csv.as_bytes(), &poisson_schema()).unwrap();
        assert!(matches!(poisson_data(&t, true), Err(Error::ParseCell { row: 2, .. })));
    }
}
