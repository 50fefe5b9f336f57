use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::standardize::StandardizationRecord;
use crate::error::{Error, Result};

/// One (region, quarter) cell of the survey panel. Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub region: usize,
    pub quarter: usize,
    pub unemployed: u64,
    pub employed: u64,
    pub inactive: u64,
    pub weight: f64,
}

impl PanelObservation {
    /// Active population `m = unemployed + employed`.
    pub fn active(&self) -> u64 {
        self.unemployed + self.employed
    }

    /// Sample size `n = unemployed + employed + inactive`.
    pub fn sample_size(&self) -> u64 {
        self.unemployed + self.employed + self.inactive
    }

    /// Unemployment rate `y / m`; `None` when the active sample is empty.
    pub fn rate(&self) -> Option<f64> {
        match self.active() {
            0 => None,
            m => Some(self.unemployed as f64 / m as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovariateGroup {
    /// Indexed by region only (`x_j`).
    Regional,
    /// Indexed by quarter only (`x_t`).
    Temporal,
    /// Indexed by cell (`x_jt`).
    SpatioTemporal,
}

/// Which CSV columns hold which covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSchema {
    pub regional: Vec<String>,
    pub temporal: Vec<String>,
    pub spatiotemporal: Vec<String>,
    pub weight_column: String,
}

impl Default for PanelSchema {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        PanelSchema {
            regional: s(&["companies", "primary", "secondary"]),
            temporal: s(&["gdp"]),
            spatiotemporal: s(&["iefp", "sa6", "sa8"]),
            weight_column: "weight".into(),
        }
    }
}

impl PanelSchema {
    pub fn empty() -> Self {
        PanelSchema {
            regional: Vec::new(),
            temporal: Vec::new(),
            spatiotemporal: Vec::new(),
            weight_column: "weight".into(),
        }
    }
}

/// Complete J × T grid of observations plus the three covariate groups.
///
/// Cells are stored region-major: cell `j * T + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    num_regions: usize,
    num_quarters: usize,
    observations: Vec<PanelObservation>,
    regional_names: Vec<String>,
    /// J × p₁, row-major.
    regional: Vec<f64>,
    temporal_names: Vec<String>,
    /// T × p₂, row-major.
    temporal: Vec<f64>,
    spatiotemporal_names: Vec<String>,
    /// (J·T) × p₃, row-major by cell.
    spatiotemporal: Vec<f64>,
    has_weights: bool,
    pub(crate) standardization: Option<StandardizationRecord>,
}

impl PanelDataset {
    /// Assembles and validates a dataset. `observations` may be in any
    /// order; it is re-sorted to region-major cell order.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_regions: usize,
        num_quarters: usize,
        observations: Vec<PanelObservation>,
        regional_names: Vec<String>,
        regional: Vec<f64>,
        temporal_names: Vec<String>,
        temporal: Vec<f64>,
        spatiotemporal_names: Vec<String>,
        spatiotemporal: Vec<f64>,
    ) -> Result<Self> {
        if num_regions == 0 || num_quarters == 0 {
            return Err(Error::Domain(
                "panel needs at least one region and quarter".into(),
            ));
        }
        let cells = num_regions * num_quarters;
        let mut slots: Vec<Option<PanelObservation>> = vec![None; cells];
        for obs in observations {
            if obs.region >= num_regions || obs.quarter >= num_quarters {
                return Err(Error::Domain(format!(
                    "observation ({}, {}) outside the {}x{} grid",
                    obs.region + 1,
                    obs.quarter + 1,
                    num_regions,
                    num_quarters
                )));
            }
            if !(obs.weight.is_finite() && obs.weight > 0.0) {
                return Err(Error::Domain(format!(
                    "design weight must be positive, got {} at ({}, {})",
                    obs.weight,
                    obs.region + 1,
                    obs.quarter + 1
                )));
            }
            let idx = obs.region * num_quarters + obs.quarter;
            if slots[idx].is_some() {
                return Err(Error::DuplicateCell {
                    region: obs.region + 1,
                    quarter: obs.quarter + 1,
                });
            }
            slots[idx] = Some(obs);
        }
        let mut ordered = Vec::with_capacity(cells);
        for (idx, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(obs) => ordered.push(obs),
                None => {
                    return Err(Error::GridIncomplete {
                        region: idx / num_quarters + 1,
                        quarter: idx % num_quarters + 1,
                    })
                }
            }
        }
        let check = |name: &str, values: &[f64], rows: usize, cols: usize| -> Result<()> {
            if values.len() != rows * cols {
                return Err(Error::Domain(format!(
                    "{name} covariates: expected {} values, got {}",
                    rows * cols,
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "{name} covariates contain missing values"
                )));
            }
            Ok(())
        };
        check("regional", &regional, num_regions, regional_names.len())?;
        check("temporal", &temporal, num_quarters, temporal_names.len())?;
        check(
            "spatio-temporal",
            &spatiotemporal,
            cells,
            spatiotemporal_names.len(),
        )?;
        let has_weights = ordered.iter().any(|o| o.weight != 1.0);
        Ok(PanelDataset {
            num_regions,
            num_quarters,
            observations: ordered,
            regional_names,
            regional,
            temporal_names,
            temporal,
            spatiotemporal_names,
            spatiotemporal,
            has_weights,
            standardization: None,
        })
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn num_quarters(&self) -> usize {
        self.num_quarters
    }

    pub fn num_cells(&self) -> usize {
        self.num_regions * self.num_quarters
    }

    pub fn cell_index(&self, region: usize, quarter: usize) -> usize {
        region * self.num_quarters + quarter
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    pub fn observation(&self, region: usize, quarter: usize) -> &PanelObservation {
        &self.observations[self.cell_index(region, quarter)]
    }

    pub fn has_weights(&self) -> bool {
        self.has_weights
    }

    pub fn covariate_names(&self, group: CovariateGroup) -> &[String] {
        match group {
            CovariateGroup::Regional => &self.regional_names,
            CovariateGroup::Temporal => &self.temporal_names,
            CovariateGroup::SpatioTemporal => &self.spatiotemporal_names,
        }
    }

    /// Locates a covariate by name.
    pub fn find_covariate(&self, name: &str) -> Option<(CovariateGroup, usize)> {
        [
            CovariateGroup::Regional,
            CovariateGroup::Temporal,
            CovariateGroup::SpatioTemporal,
        ]
        .into_iter()
        .find_map(|g| {
            self.covariate_names(g)
                .iter()
                .position(|n| n == name)
                .map(|i| (g, i))
        })
    }

    /// Value of covariate `column` of `group` in cell `(region, quarter)`.
    pub fn covariate(
        &self,
        group: CovariateGroup,
        column: usize,
        region: usize,
        quarter: usize,
    ) -> f64 {
        match group {
            CovariateGroup::Regional => self.regional[region * self.regional_names.len() + column],
            CovariateGroup::Temporal => self.temporal[quarter * self.temporal_names.len() + column],
            CovariateGroup::SpatioTemporal => {
                let cell = self.cell_index(region, quarter);
                self.spatiotemporal[cell * self.spatiotemporal_names.len() + column]
            }
        }
    }

    /// All values of one covariate over its natural index set.
    pub fn covariate_column(&self, group: CovariateGroup, column: usize) -> Vec<f64> {
        let (values, width) = self.group_storage(group);
        values.iter().skip(column).step_by(width).copied().collect()
    }

    pub(crate) fn set_covariate_column(
        &mut self,
        group: CovariateGroup,
        column: usize,
        new: &[f64],
    ) {
        let width = self.covariate_names(group).len();
        let values = match group {
            CovariateGroup::Regional => &mut self.regional,
            CovariateGroup::Temporal => &mut self.temporal,
            CovariateGroup::SpatioTemporal => &mut self.spatiotemporal,
        };
        for (slot, v) in values.iter_mut().skip(column).step_by(width).zip(new) {
            *slot = *v;
        }
    }

    fn group_storage(&self, group: CovariateGroup) -> (&[f64], usize) {
        match group {
            CovariateGroup::Regional => (&self.regional, self.regional_names.len().max(1)),
            CovariateGroup::Temporal => (&self.temporal, self.temporal_names.len().max(1)),
            CovariateGroup::SpatioTemporal => {
                (&self.spatiotemporal, self.spatiotemporal_names.len().max(1))
            }
        }
    }

    /// Standardisation applied to the covariates, if any.
    pub fn standardization(&self) -> Option<&StandardizationRecord> {
        self.standardization.as_ref()
    }

    /// Restricts the panel to its first `quarters` quarters.
    pub fn truncate_quarters(&self, quarters: usize) -> Result<PanelDataset> {
        if quarters == 0 || quarters > self.num_quarters {
            return Err(Error::spec(format!(
                "cannot keep {quarters} of {} quarters",
                self.num_quarters
            )));
        }
        let observations = self
            .observations
            .iter()
            .filter(|o| o.quarter < quarters)
            .cloned()
            .collect();
        let p2 = self.temporal_names.len();
        let p3 = self.spatiotemporal_names.len();
        let mut spatiotemporal = Vec::with_capacity(self.num_regions * quarters * p3);
        for j in 0..self.num_regions {
            for t in 0..quarters {
                let cell = self.cell_index(j, t);
                spatiotemporal.extend_from_slice(&self.spatiotemporal[cell * p3..(cell + 1) * p3]);
            }
        }
        let mut out = PanelDataset::new(
            self.num_regions,
            quarters,
            observations,
            self.regional_names.clone(),
            self.regional.clone(),
            self.temporal_names.clone(),
            self.temporal[..quarters * p2].to_vec(),
            self.spatiotemporal_names.clone(),
            spatiotemporal,
        )?;
        out.has_weights = self.has_weights;
        out.standardization = self.standardization.clone();
        Ok(out)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a panel CSV. Rates are always recomputed from the counts; optional
/// `active` / `sample_size` columns are only used to cross-check them.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_panel(file, schema, path)
}

pub fn read_panel(reader: impl Read, schema: &PanelSchema, origin: &Path) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| parse_err(origin, 1, format!("missing required column `{name}`")))
    };
    let c_region = require("region")?;
    let c_quarter = require("quarter")?;
    let c_unemp = require("unemployed")?;
    let c_emp = require("employed")?;
    let c_inact = require("inactive")?;
    let c_active = col("active");
    let c_size = col("sample_size").or_else(|| col("n"));
    let c_weight = col(&schema.weight_column);
    let cov_cols = |names: &[String]| names.iter().map(|n| require(n)).collect::<Result<Vec<_>>>();
    let reg_cols = cov_cols(&schema.regional)?;
    let tmp_cols = cov_cols(&schema.temporal)?;
    let st_cols = cov_cols(&schema.spatiotemporal)?;

    struct Row {
        obs: PanelObservation,
        regional: Vec<f64>,
        temporal: Vec<f64>,
        spatiotemporal: Vec<f64>,
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let row_no = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        let int = |c: usize, what: &str| -> Result<i64> {
            let raw = field(c);
            if raw.is_empty() {
                return Err(Error::GridIncomplete {
                    region: field(c_region).parse().unwrap_or(0),
                    quarter: field(c_quarter).parse().unwrap_or(0),
                });
            }
            raw.parse::<i64>().map_err(|_| {
                parse_err(origin, line, format!("`{what}` is not an integer: `{raw}`"))
            })
        };
        let count = |c: usize, what: &str| -> Result<u64> {
            let v = int(c, what)?;
            if v < 0 {
                return Err(Error::Domain(format!(
                    "row {row_no}: negative {what} count {v}"
                )));
            }
            Ok(v as u64)
        };
        let region = int(c_region, "region")?;
        let quarter = int(c_quarter, "quarter")?;
        if region < 1 || quarter < 1 {
            return Err(Error::Domain(format!(
                "row {row_no}: region and quarter ids are 1-based"
            )));
        }
        let obs = PanelObservation {
            region: region as usize - 1,
            quarter: quarter as usize - 1,
            unemployed: count(c_unemp, "unemployed")?,
            employed: count(c_emp, "employed")?,
            inactive: count(c_inact, "inactive")?,
            weight: match c_weight.map(field) {
                None | Some("") => 1.0,
                Some(raw) => raw
                    .parse::<f64>()
                    .map_err(|_| parse_err(origin, line, format!("bad weight `{raw}`")))?,
            },
        };
        if let Some(c) = c_active {
            let active = count(c, "active")?;
            if active != obs.active() {
                return Err(Error::InconsistentCounts {
                    row: row_no,
                    reason: format!(
                        "active = {active} but unemployed + employed = {}",
                        obs.active()
                    ),
                });
            }
        }
        if let Some(c) = c_size {
            let n = count(c, "sample_size")?;
            if n != obs.sample_size() {
                return Err(Error::InconsistentCounts {
                    row: row_no,
                    reason: format!(
                        "sample_size = {n} but unemployed + employed + inactive = {}",
                        obs.sample_size()
                    ),
                });
            }
        }
        let floats = |cols: &[usize], names: &[String]| -> Result<Vec<f64>> {
            cols.iter()
                .zip(names)
                .map(|(&c, name)| {
                    let raw = field(c);
                    raw.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            Error::Domain(format!(
                                "row {row_no}: covariate `{name}` missing or invalid (`{raw}`)"
                            ))
                        })
                })
                .collect()
        };
        rows.push(Row {
            regional: floats(&reg_cols, &schema.regional)?,
            temporal: floats(&tmp_cols, &schema.temporal)?,
            spatiotemporal: floats(&st_cols, &schema.spatiotemporal)?,
            obs,
        });
    }
    if rows.is_empty() {
        return Err(Error::Domain("panel file has no rows".into()));
    }
    let num_regions = rows.iter().map(|r| r.obs.region).max().unwrap() + 1;
    let num_quarters = rows.iter().map(|r| r.obs.quarter).max().unwrap() + 1;

    // Group-level covariates must agree across the index they do not depend on.
    let mut regional: Vec<Option<Vec<f64>>> = vec![None; num_regions];
    let mut temporal: Vec<Option<Vec<f64>>> = vec![None; num_quarters];
    let mut st_by_cell: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let same = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
        };
        match &regional[row.obs.region] {
            Some(prev) if !same(prev, &row.regional) => {
                return Err(Error::Domain(format!(
                    "row {}: regional covariates differ across quarters of region {}",
                    i + 1,
                    row.obs.region + 1
                )))
            }
            Some(_) => {}
            None => regional[row.obs.region] = Some(row.regional.clone()),
        }
        match &temporal[row.obs.quarter] {
            Some(prev) if !same(prev, &row.temporal) => {
                return Err(Error::Domain(format!(
                    "row {}: temporal covariates differ across regions in quarter {}",
                    i + 1,
                    row.obs.quarter + 1
                )))
            }
            Some(_) => {}
            None => temporal[row.obs.quarter] = Some(row.temporal.clone()),
        }
        st_by_cell.insert(
            row.obs.region * num_quarters + row.obs.quarter,
            row.spatiotemporal.clone(),
        );
    }
    let flatten = |parts: Vec<Option<Vec<f64>>>| -> Vec<f64> {
        parts.into_iter().flatten().flatten().collect()
    };
    let regional = flatten(regional);
    let temporal = flatten(temporal);
    let mut spatiotemporal =
        Vec::with_capacity(num_regions * num_quarters * schema.spatiotemporal.len());
    for cell in 0..num_regions * num_quarters {
        if let Some(v) = st_by_cell.get(&cell) {
            spatiotemporal.extend_from_slice(v);
        }
    }
    let observations = rows.into_iter().map(|r| r.obs).collect();
    let mut dataset = PanelDataset::new(
        num_regions,
        num_quarters,
        observations,
        schema.regional.clone(),
        regional,
        schema.temporal.clone(),
        temporal,
        schema.spatiotemporal.clone(),
        spatiotemporal,
    )?;
    dataset.has_weights = c_weight.is_some();
    Ok(dataset)
}

/// Writes a panel CSV readable by [`load_panel`] with the dataset's own schema.
pub fn write_panel(dataset: &PanelDataset, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["region", "quarter", "unemployed", "employed", "inactive"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if dataset.has_weights {
        header.push("weight".into());
    }
    header.extend(dataset.regional_names.iter().cloned());
    header.extend(dataset.temporal_names.iter().cloned());
    header.extend(dataset.spatiotemporal_names.iter().cloned());
    wtr.write_record(&header)?;
    let groups = [
        CovariateGroup::Regional,
        CovariateGroup::Temporal,
        CovariateGroup::SpatioTemporal,
    ];
    for obs in &dataset.observations {
        let mut record = vec![
            (obs.region + 1).to_string(),
            (obs.quarter + 1).to_string(),
            obs.unemployed.to_string(),
            obs.employed.to_string(),
            obs.inactive.to_string(),
        ];
        if dataset.has_weights {
            record.push(obs.weight.to_string());
        }
        for g in groups {
            for c in 0..dataset.covariate_names(g).len() {
                record.push(dataset.covariate(g, c, obs.region, obs.quarter).to_string());
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

impl PanelDataset {
    /// The schema this dataset was built with (weight column named `weight`).
    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            regional: self.regional_names.clone(),
            temporal: self.temporal_names.clone(),
            spatiotemporal: self.spatiotemporal_names.clone(),
            weight_column: "weight".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, schema: &PanelSchema) -> Result<PanelDataset> {
        read_panel(text.as_bytes(), schema, Path::new("test.csv"))
    }

    #[test]
    fn degenerate_active_population_flags_missing_rate() {
        let d = read(
            "region,quarter,unemployed,employed,inactive,sample_size\n1,1,0,0,5,5\n",
            &PanelSchema::empty(),
        )
        .unwrap();
        assert_eq!(d.num_cells(), 1);
        assert_eq!(d.observation(0, 0).rate(), None);
        assert_eq!(d.observation(0, 0).sample_size(), 5);
    }

    #[test]
    fn count_identity_violation() {
        let err = read(
            "region,quarter,unemployed,employed,inactive,active\n1,1,3,4,2,8\n",
            &PanelSchema::empty(),
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::InconsistentCounts { row: 1, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn negative_counts_are_domain_errors() {
        let err = read(
            "region,quarter,unemployed,employed,inactive\n1,1,-1,4,2\n",
            &PanelSchema::empty(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn missing_cell_is_rejected() {
        let err = read(
            "region,quarter,unemployed,employed,inactive\n1,1,1,4,2\n1,2,1,4,2\n2,1,1,4,2\n",
            &PanelSchema::empty(),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::GridIncomplete {
                    region: 2,
                    quarter: 2
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn rates_come_from_counts_not_input() {
        let d = read(
            "region,quarter,unemployed,employed,inactive,rate\n1,1,5,45,10,0.9\n",
            &PanelSchema::empty(),
        )
        .unwrap();
        assert_eq!(d.observation(0, 0).rate(), Some(0.1));
    }

    #[test]
    fn regional_covariate_must_be_constant_in_time() {
        let schema = PanelSchema {
            regional: vec!["x".into()],
            ..PanelSchema::empty()
        };
        let err = read(
            "region,quarter,unemployed,employed,inactive,x\n1,1,1,1,1,0.5\n1,2,1,1,1,0.6\n",
            &schema,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn weight_defaults_to_one() {
        let d = read(
            "region,quarter,unemployed,employed,inactive\n1,1,1,1,1\n",
            &PanelSchema::empty(),
        )
        .unwrap();
        assert_eq!(d.observation(0, 0).weight, 1.0);
        assert!(!d.has_weights());
    }
}
