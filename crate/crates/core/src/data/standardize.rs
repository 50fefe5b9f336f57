use crate::data::panel::{CovariateGroup, PanelDataset};
use crate::stats;

/// Centering and scaling applied to one covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateScaling {
    pub name: String,
    pub group: CovariateGroup,
    pub mean: f64,
    pub scale: f64,
    /// Zero-variance covariate, left untouched (`mean = 0`, `scale = 1`).
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StandardizationRecord {
    pub covariates: Vec<CovariateScaling>,
}

impl StandardizationRecord {
    pub fn get(&self, name: &str) -> Option<&CovariateScaling> {
        self.covariates.iter().find(|c| c.name == name)
    }

    /// Maps coefficients fitted on standardised covariates back to the raw
    /// covariate scale. `names[i]` labels `slopes[i]`; covariates without a
    /// record pass through unchanged. The intercept absorbs the centering.
    pub fn unstandardize(
        &self,
        names: &[String],
        intercept: Option<f64>,
        slopes: &[f64],
    ) -> (Option<f64>, Vec<f64>) {
        let mut shift = 0.0;
        let raw = names
            .iter()
            .zip(slopes)
            .map(|(name, &b)| match self.get(name) {
                Some(s) => {
                    shift += b * s.mean / s.scale;
                    b / s.scale
                }
                None => b,
            })
            .collect();
        (intercept.map(|a| a - shift), raw)
    }

    /// Inverse of [`StandardizationRecord::unstandardize`].
    pub fn standardize(
        &self,
        names: &[String],
        intercept: Option<f64>,
        slopes: &[f64],
    ) -> (Option<f64>, Vec<f64>) {
        let mut shift = 0.0;
        let std = names
            .iter()
            .zip(slopes)
            .map(|(name, &b)| match self.get(name) {
                Some(s) => {
                    shift += b * s.mean;
                    b * s.scale
                }
                None => b,
            })
            .collect();
        (intercept.map(|a| a + shift), std)
    }
}

/// Centres each covariate to mean 0 and scales to unit sample standard
/// deviation over its own index set (regions, quarters or cells).
/// Constant covariates are left as they are and flagged in the record.
pub fn standardize_covariates(dataset: &PanelDataset) -> PanelDataset {
    let mut out = dataset.clone();
    let mut record = StandardizationRecord::default();
    for group in [
        CovariateGroup::Regional,
        CovariateGroup::Temporal,
        CovariateGroup::SpatioTemporal,
    ] {
        for (c, name) in dataset.covariate_names(group).iter().enumerate() {
            let column = dataset.covariate_column(group, c);
            let mean = stats::mean(&column);
            let sd = stats::std_dev(&column);
            let constant = !(sd > 1e-12 * mean.abs().max(1.0));
            let (mean, scale) = if constant { (0.0, 1.0) } else { (mean, sd) };
            if !constant {
                let scaled: Vec<f64> = column.iter().map(|x| (x - mean) / scale).collect();
                out.set_covariate_column(group, c, &scaled);
            }
            record.covariates.push(CovariateScaling {
                name: name.clone(),
                group,
                mean,
                scale,
                constant,
            });
        }
    }
    out.standardization = Some(record);
    out
}

/// Applies an existing record (e.g. from the training quarters) to another
/// panel with the same covariates. Covariates without a record are left as is.
pub fn apply_standardization(
    dataset: &PanelDataset,
    record: &StandardizationRecord,
) -> PanelDataset {
    let mut out = dataset.clone();
    for group in [
        CovariateGroup::Regional,
        CovariateGroup::Temporal,
        CovariateGroup::SpatioTemporal,
    ] {
        for (c, name) in dataset.covariate_names(group).iter().enumerate() {
            if let Some(s) = record.get(name) {
                let scaled: Vec<f64> = dataset
                    .covariate_column(group, c)
                    .iter()
                    .map(|x| (x - s.mean) / s.scale)
                    .collect();
                out.set_covariate_column(group, c, &scaled);
            }
        }
    }
    out.standardization = Some(record.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PanelObservation;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dataset(regional: Vec<f64>) -> PanelDataset {
        let j = regional.len();
        let obs = (0..j)
            .map(|r| PanelObservation {
                region: r,
                quarter: 0,
                unemployed: 1,
                employed: 9,
                inactive: 5,
                weight: 1.0,
            })
            .collect();
        PanelDataset::new(
            j,
            1,
            obs,
            vec!["x".into()],
            regional,
            vec![],
            vec![],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn one_two_three() {
        let d = standardize_covariates(&dataset(vec![1.0, 2.0, 3.0]));
        assert_eq!(
            d.covariate_column(CovariateGroup::Regional, 0),
            vec![-1.0, 0.0, 1.0]
        );
        let rec = d.standardization().unwrap().get("x").unwrap();
        assert_eq!((rec.mean, rec.scale, rec.constant), (2.0, 1.0, false));
    }

    #[test]
    fn constant_covariate_is_flagged_and_unchanged() {
        let d = standardize_covariates(&dataset(vec![5.0, 5.0, 5.0]));
        assert_eq!(
            d.covariate_column(CovariateGroup::Regional, 0),
            vec![5.0, 5.0, 5.0]
        );
        assert!(d.standardization().unwrap().get("x").unwrap().constant);
    }

    #[test]
    fn applying_own_record_reproduces_standardization() {
        let raw = dataset(vec![3.0, 9.0, 4.5, 1.0]);
        let d = standardize_covariates(&raw);
        let again = apply_standardization(&raw, d.standardization().unwrap());
        assert_eq!(again, d);
    }

    #[test]
    fn standardized_column_has_unit_moments() {
        let d = standardize_covariates(&dataset(vec![10.0, 250.0, -3.5, 7.25, 1e4]));
        let col = d.covariate_column(CovariateGroup::Regional, 0);
        assert_abs_diff_eq!(stats::mean(&col), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats::std_dev(&col), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn coefficient_round_trip(
            means in prop::collection::vec(-50.0f64..50.0, 3),
            scales in prop::collection::vec(0.1f64..20.0, 3),
            slopes in prop::collection::vec(-10.0f64..10.0, 3),
            intercept in -5.0f64..5.0,
        ) {
            let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let record = StandardizationRecord {
                covariates: names.iter().zip(means.iter().zip(&scales)).map(|(n, (&m, &s))| CovariateScaling {
                    name: n.clone(), group: CovariateGroup::Regional, mean: m, scale: s, constant: false,
                }).collect(),
            };
            let (a_std, b_std) = record.standardize(&names, Some(intercept), &slopes);
            let (a_raw, b_raw) = record.unstandardize(&names, a_std, &b_std);
            // relative to the largest magnitude that enters the intercept shift
            let magnitude = intercept.abs() + slopes.iter().zip(&means).map(|(b, m)| (b * m).abs()).sum::<f64>();
            prop_assert!((a_raw.unwrap() - intercept).abs() <= 1e-12 * magnitude.max(1.0));
            for (x, y) in b_raw.iter().zip(&slopes) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
