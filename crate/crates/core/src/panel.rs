//! Long-format country x date x variable panels.
//!
//! [`PanelTable`] is the data carrier for every estimation stage. It is
//! immutable once built; transforms return new tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use thiserror::Error;

use crate::stats::{self, QuantileMethod};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate observation ({country}, {date}, {variable})")]
    DuplicateKey { country: String, date: NaiveDate, variable: String },
    #[error("date {date} is not on the {frequency:?} grid")]
    FrequencyMismatch { date: NaiveDate, frequency: Frequency },
    #[error("variable {0} has no observations")]
    EmptyVariable(String),
    #[error("variable {0} has zero variance")]
    ZeroVariance(String),
    #[error("variable {0} has zero range (max == min)")]
    ZeroRange(String),
    #[error("non-positive value {value} at position {index}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("invalid percentile bounds {lower}/{upper}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("invalid country metadata: {0}")]
    InvalidMeta(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PanelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Frequency {
    Weekly,
    Quarterly,
    Annual,
}

impl Frequency {
    /// Whether a single date sits on this frequency's grid. Weekly dates are
    /// additionally required to share one weekday across the table.
    pub fn accepts(self, d: NaiveDate) -> bool {
        match self {
            Frequency::Weekly => true,
            Frequency::Quarterly => d == quarter_end(d),
            Frequency::Annual => d.month() == 12 && d.day() == 31,
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "weekly" | "w" => Ok(Frequency::Weekly),
            "quarterly" | "q" => Ok(Frequency::Quarterly),
            "annual" | "a" | "yearly" => Ok(Frequency::Annual),
            other => Err(format!("unknown frequency `{other}`")),
        }
    }
}

/// Last calendar day of the quarter containing `d`.
pub fn quarter_end(d: NaiveDate) -> NaiveDate {
    let q = (d.month() - 1) / 3;
    let (m, day) = match q {
        0 => (3, 31),
        1 => (6, 30),
        2 => (9, 30),
        _ => (12, 31),
    };
    NaiveDate::from_ymd_opt(d.year(), m, day).expect("valid quarter end")
}

/// `YYYYQn` label of the quarter containing `d`.
pub fn quarter_label(d: NaiveDate) -> String {
    format!("{}Q{}", d.year(), (d.month() - 1) / 3 + 1)
}

/// Observation key; orders by country, then variable, then date.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObsKey {
    pub country: String,
    pub variable: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    frequency: Frequency,
    obs: BTreeMap<ObsKey, f64>,
    balanced: bool,
}

/// One raw row: `(country, date, variable, value)`.
pub type Observation = (String, NaiveDate, String, f64);

impl PanelTable {
    /// Build a table, validating key uniqueness and the frequency grid.
    pub fn from_observations<I>(frequency: Frequency, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Observation>,
    {
        let mut obs = BTreeMap::new();
        for (country, date, variable, value) in rows {
            if !frequency.accepts(date) {
                return Err(PanelError::FrequencyMismatch { date, frequency });
            }
            let key = ObsKey { country, variable, date };
            if obs.contains_key(&key) {
                return Err(PanelError::DuplicateKey {
                    country: key.country,
                    date: key.date,
                    variable: key.variable,
                });
            }
            obs.insert(key, value);
        }
        Self::from_map(frequency, obs)
    }

    fn from_map(frequency: Frequency, obs: BTreeMap<ObsKey, f64>) -> Result<Self> {
        if frequency == Frequency::Weekly {
            let mut weekday: Option<Weekday> = None;
            for k in obs.keys() {
                match weekday {
                    None => weekday = Some(k.date.weekday()),
                    Some(w) if w != k.date.weekday() => {
                        return Err(PanelError::FrequencyMismatch { date: k.date, frequency });
                    }
                    _ => {}
                }
            }
        }
        let mut t = PanelTable { frequency, obs, balanced: false };
        t.balanced = t.compute_balanced();
        Ok(t)
    }

    fn compute_balanced(&self) -> bool {
        let n = self.countries().len() * self.dates().len() * self.variables().len();
        n == self.obs.len()
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObsKey, f64)> {
        self.obs.iter().map(|(k, v)| (k, *v))
    }

    pub fn countries(&self) -> Vec<String> {
        let s: BTreeSet<&String> = self.obs.keys().map(|k| &k.country).collect();
        s.into_iter().cloned().collect()
    }

    pub fn variables(&self) -> Vec<String> {
        let s: BTreeSet<&String> = self.obs.keys().map(|k| &k.variable).collect();
        s.into_iter().cloned().collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        let s: BTreeSet<NaiveDate> = self.obs.keys().map(|k| k.date).collect();
        s.into_iter().collect()
    }

    pub fn has_variable(&self, variable: &str) -> bool {
        self.obs.keys().any(|k| k.variable == variable)
    }

    pub fn get(&self, country: &str, date: NaiveDate, variable: &str) -> Option<f64> {
        let key = ObsKey { country: country.to_string(), variable: variable.to_string(), date };
        self.obs.get(&key).copied()
    }

    /// Date-ordered series of one variable for one country.
    pub fn series(&self, country: &str, variable: &str) -> Vec<(NaiveDate, f64)> {
        let lo = ObsKey { country: country.into(), variable: variable.into(), date: NaiveDate::MIN };
        let hi = ObsKey { country: country.into(), variable: variable.into(), date: NaiveDate::MAX };
        self.obs.range(lo..=hi).map(|(k, v)| (k.date, *v)).collect()
    }

    pub fn series_values(&self, country: &str, variable: &str) -> Vec<f64> {
        self.series(country, variable).into_iter().map(|(_, v)| v).collect()
    }

    /// All values of a variable pooled over countries and dates.
    pub fn pooled(&self, variable: &str) -> Vec<f64> {
        self.obs.iter().filter(|(k, _)| k.variable == variable).map(|(_, v)| *v).collect()
    }

    /// New table with every value of `variable` passed through `f`.
    pub fn map_variable<F: Fn(&ObsKey, f64) -> f64>(&self, variable: &str, f: F) -> PanelTable {
        let obs = self
            .obs
            .iter()
            .map(|(k, v)| (k.clone(), if k.variable == variable { f(k, *v) } else { *v }))
            .collect();
        PanelTable { frequency: self.frequency, obs, balanced: self.balanced }
    }

    /// Keep only observations satisfying `keep`.
    pub fn filter<F: Fn(&ObsKey) -> bool>(&self, keep: F) -> PanelTable {
        let obs: BTreeMap<_, _> = self.obs.iter().filter(|(k, _)| keep(k)).map(|(k, v)| (k.clone(), *v)).collect();
        let mut t = PanelTable { frequency: self.frequency, obs, balanced: false };
        t.balanced = t.compute_balanced();
        t
    }

    pub fn select_variables(&self, variables: &[&str]) -> PanelTable {
        self.filter(|k| variables.contains(&k.variable.as_str()))
    }

    pub fn date_range(&self, start: NaiveDate, end: NaiveDate) -> PanelTable {
        self.filter(|k| k.date >= start && k.date <= end)
    }

    /// Union of two tables of the same frequency.
    pub fn merge(&self, other: &PanelTable) -> Result<PanelTable> {
        let rows = self.to_rows().into_iter().chain(other.to_rows());
        PanelTable::from_observations(self.frequency, rows)
    }

    pub fn to_rows(&self) -> Vec<Observation> {
        self.obs
            .iter()
            .map(|(k, v)| (k.country.clone(), k.date, k.variable.clone(), *v))
            .collect()
    }

    /// Drop countries or periods so that the result is balanced.
    pub fn balance(&self, strategy: BalanceStrategy) -> PanelTable {
        let countries = self.countries();
        let dates = self.dates();
        let vars = self.variables();
        let complete = |c: &str, d: NaiveDate| vars.iter().all(|v| self.get(c, d, v).is_some());
        match strategy {
            BalanceStrategy::DropCountries => {
                let keep: BTreeSet<String> = countries
                    .iter()
                    .filter(|c| dates.iter().all(|d| complete(c, *d)))
                    .cloned()
                    .collect();
                self.filter(|k| keep.contains(&k.country))
            }
            BalanceStrategy::DropPeriods => {
                let keep: BTreeSet<NaiveDate> = dates
                    .iter()
                    .filter(|d| countries.iter().all(|c| complete(c, **d)))
                    .copied()
                    .collect();
                self.filter(|k| keep.contains(&k.date))
            }
        }
    }

    /// Write the table as `country,date,variable,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["country", "date", "variable", "value"])?;
        for (k, v) in &self.obs {
            wr.write_record([
                k.country.as_str(),
                &k.date.format("%Y-%m-%d").to_string(),
                k.variable.as_str(),
                &format_value(*v),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceStrategy {
    /// Remove any country with a missing (date, variable) cell.
    DropCountries,
    /// Remove any date at which some country misses a variable.
    DropPeriods,
}

/// Column mapping and declared frequency of an input CSV.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub frequency: Frequency,
    pub country: String,
    pub date: String,
    pub variable: String,
    pub value: String,
}

impl CsvSchema {
    pub fn new(frequency: Frequency) -> Self {
        CsvSchema {
            frequency,
            country: "country".into(),
            date: "date".into(),
            variable: "variable".into(),
            value: "value".into(),
        }
    }
}

pub fn load_panel_csv(path: &Path, schema: &CsvSchema) -> Result<PanelTable> {
    read_panel_csv(File::open(path)?, schema)
}

pub fn read_panel_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<PanelTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| PanelError::MalformedRow {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
    };
    let (ci, di, vi, xi) = (col(&schema.country)?, col(&schema.date)?, col(&schema.variable)?, col(&schema.value)?);
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            rec.get(i).map(str::trim).ok_or_else(|| PanelError::MalformedRow {
                line,
                reason: format!("expected at least {} fields, found {}", i + 1, rec.len()),
            })
        };
        let country = field(ci)?;
        if country.is_empty() {
            return Err(PanelError::MalformedRow { line, reason: "empty country".into() });
        }
        let date = NaiveDate::parse_from_str(field(di)?, "%Y-%m-%d").map_err(|e| PanelError::MalformedRow {
            line,
            reason: format!("bad date `{}`: {e}", field(di).unwrap_or("")),
        })?;
        let variable = field(vi)?;
        let value: f64 = field(xi)?.parse().map_err(|_| PanelError::MalformedRow {
            line,
            reason: format!("bad value `{}`", field(xi).unwrap_or("")),
        })?;
        if !seen.insert((country.to_string(), date, variable.to_string())) {
            return Err(PanelError::DuplicateKey { country: country.into(), date, variable: variable.into() });
        }
        rows.push((country.to_string(), date, variable.to_string(), value));
    }
    PanelTable::from_observations(schema.frequency, rows)
}

/// Clamp each variable to its pooled `[lower, upper]` percentiles (type 7).
pub fn winsorize(table: &PanelTable, lower: f64, upper: f64) -> Result<PanelTable> {
    winsorize_with(table, lower, upper, QuantileMethod::Linear)
}

pub fn winsorize_with(table: &PanelTable, lower: f64, upper: f64, method: QuantileMethod) -> Result<PanelTable> {
    let vars = table.variables();
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    winsorize_variables(table, &refs, lower, upper, method)
}

pub fn winsorize_variables(
    table: &PanelTable,
    variables: &[&str],
    lower: f64,
    upper: f64,
    method: QuantileMethod,
) -> Result<PanelTable> {
    if !(0.0..100.0).contains(&lower) || !(lower < upper && upper <= 100.0) {
        return Err(PanelError::InvalidBounds { lower, upper });
    }
    let mut out = table.clone();
    for v in variables {
        let sorted = stats::sorted_copy(&table.pooled(v));
        if sorted.is_empty() {
            return Err(PanelError::EmptyVariable(v.to_string()));
        }
        let lo = stats::quantile_sorted(&sorted, lower / 100.0, method);
        let hi = stats::quantile_sorted(&sorted, upper / 100.0, method);
        out = out.map_variable(v, |_, x| x.clamp(lo, hi));
    }
    Ok(out)
}

/// Apply fixed clamp bounds; idempotent by construction.
pub fn clamp_variable(table: &PanelTable, variable: &str, lo: f64, hi: f64) -> PanelTable {
    table.map_variable(variable, |_, x| x.clamp(lo, hi))
}

/// Sample over which z-score moments are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationScope {
    /// One mean/SD per variable over all country-periods.
    #[default]
    Pooled,
    /// One mean/SD per (country, variable).
    PerCountry,
}

pub fn zscore_normalize(table: &PanelTable, variables: &[&str]) -> Result<PanelTable> {
    zscore_normalize_scoped(table, variables, NormalizationScope::Pooled)
}

pub fn zscore_normalize_scoped(
    table: &PanelTable,
    variables: &[&str],
    scope: NormalizationScope,
) -> Result<PanelTable> {
    let mut out = table.clone();
    for v in variables {
        let groups: Vec<Option<String>> = match scope {
            NormalizationScope::Pooled => vec![None],
            NormalizationScope::PerCountry => table.countries().into_iter().map(Some).collect(),
        };
        let mut moments = BTreeMap::new();
        for g in groups {
            let xs: Vec<f64> = match &g {
                None => table.pooled(v),
                Some(c) => table.series_values(c, v),
            };
            let sd = stats::sample_sd(&xs);
            if xs.is_empty() {
                return Err(PanelError::EmptyVariable(v.to_string()));
            }
            if !(sd > 0.0) {
                return Err(PanelError::ZeroVariance(v.to_string()));
            }
            moments.insert(g, (stats::mean(&xs), sd));
        }
        out = out.map_variable(v, |k, x| {
            let key = match scope {
                NormalizationScope::Pooled => None,
                NormalizationScope::PerCountry => Some(k.country.clone()),
            };
            let (m, s) = moments[&key];
            (x - m) / s
        });
    }
    Ok(out)
}

/// Pooled min/max of a variable.
pub fn min_max(table: &PanelTable, variable: &str) -> Option<(f64, f64)> {
    let xs = table.pooled(variable);
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))))
}

pub fn minmax_normalize(table: &PanelTable, variables: &[&str]) -> Result<PanelTable> {
    let mut out = table.clone();
    for v in variables {
        let (lo, hi) = min_max(table, v).ok_or_else(|| PanelError::EmptyVariable(v.to_string()))?;
        if !(hi > lo) {
            return Err(PanelError::ZeroRange(v.to_string()));
        }
        out = out.map_variable(v, |_, x| (x - lo) / (hi - lo));
    }
    Ok(out)
}

/// Percentage log returns `100 (ln p_t - ln p_{t-1})`.
pub fn log_return(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        return Err(PanelError::NonPositiveValue { index, value });
    }
    Ok(prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EconomyClass {
    AE,
    EME,
}

impl std::str::FromStr for EconomyClass {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AE" => Ok(EconomyClass::AE),
            "EME" | "EM" => Ok(EconomyClass::EME),
            o => Err(format!("unknown economy class `{o}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum RegimeClass {
    Managed,
    FreeFloat,
}

impl RegimeClass {
    /// Index 6 is free float; 1..=5 are managed arrangements.
    pub fn from_index(index: u8) -> Option<Self> {
        match index {
            1..=5 => Some(RegimeClass::Managed),
            6 => Some(RegimeClass::FreeFloat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryMeta {
    pub country_id: String,
    pub economy_class: EconomyClass,
    /// Year -> FX regime index (1..=6).
    pub fx_regime_index: BTreeMap<i32, u8>,
    /// Year -> capital control index in `[0, 1]`.
    pub capital_control_index: BTreeMap<i32, f64>,
}

impl CountryMeta {
    pub fn new(
        country_id: impl Into<String>,
        economy_class: EconomyClass,
        fx_regime_index: BTreeMap<i32, u8>,
        capital_control_index: BTreeMap<i32, f64>,
    ) -> Result<Self> {
        let country_id = country_id.into();
        if let Some((y, i)) = fx_regime_index.iter().find(|(_, i)| !(1..=6).contains(*i)) {
            return Err(PanelError::InvalidMeta(format!("{country_id}: FX regime index {i} in {y} outside 1..=6")));
        }
        if let Some((y, c)) = capital_control_index.iter().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(PanelError::InvalidMeta(format!("{country_id}: capital control {c} in {y} outside [0,1]")));
        }
        Ok(CountryMeta { country_id, economy_class, fx_regime_index, capital_control_index })
    }

    /// Regime over the whole sample: free float when the majority of years
    /// carry index 6 (ties go to managed).
    pub fn regime_class(&self) -> RegimeClass {
        let n = self.fx_regime_index.len();
        let floats = self.fx_regime_index.values().filter(|i| **i == 6).count();
        if n > 0 && 2 * floats > n {
            RegimeClass::FreeFloat
        } else {
            RegimeClass::Managed
        }
    }

    pub fn regime_class_in(&self, year: i32) -> Option<RegimeClass> {
        self.fx_regime_index.get(&year).and_then(|i| RegimeClass::from_index(*i))
    }

    pub fn capital_control_in(&self, year: i32) -> Option<f64> {
        self.capital_control_index.get(&year).copied()
    }
}

/// Derive per-year regime and capital-control indices from quarterly
/// `FXRegime` / `CapitalControl` variables (yearly median, regime rounded).
pub fn derive_country_meta(
    quarterly: &PanelTable,
    classes: &BTreeMap<String, EconomyClass>,
    regime_var: &str,
    control_var: &str,
) -> Result<Vec<CountryMeta>> {
    let mut out = Vec::new();
    for c in quarterly.countries() {
        let class = *classes
            .get(&c)
            .ok_or_else(|| PanelError::InvalidMeta(format!("no economy class for {c}")))?;
        let by_year = |var: &str| {
            let mut m: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
            for (d, v) in quarterly.series(&c, var) {
                m.entry(d.year()).or_default().push(v);
            }
            m.into_iter().map(|(y, vs)| (y, stats::median(&vs))).collect::<BTreeMap<_, _>>()
        };
        let regime = by_year(regime_var).into_iter().map(|(y, v)| (y, v.round().clamp(0.0, 255.0) as u8)).collect();
        let control = by_year(control_var);
        out.push(CountryMeta::new(c, class, regime, control)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn one_var(values: &[f64]) -> PanelTable {
        let rows = values.iter().enumerate().map(|(i, v)| {
            let q = d(2000 + (i / 4) as i32, 3 * (i % 4) as u32 + 1, 1);
            ("AA".to_string(), quarter_end(q), "x".to_string(), *v)
        });
        PanelTable::from_observations(Frequency::Quarterly, rows).unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let csv = "country,date,variable,value\nUS,2010-03-31,ShortRate,0.2\nUS,2010-06-30,ShortRate,0.25\nUK,2010-03-31,ShortRate,0.5\n";
        let t = read_panel_csv(csv.as_bytes(), &CsvSchema::new(Frequency::Quarterly)).unwrap();
        assert_eq!(t.len(), 3);
        assert!(!t.is_balanced());
    }

    #[test]
    fn duplicate_key_rejected() {
        let csv = "country,date,variable,value\nUS,2010-03-31,ShortRate,0.2\nUS,2010-03-31,ShortRate,0.3\n";
        let err = read_panel_csv(csv.as_bytes(), &CsvSchema::new(Frequency::Quarterly)).unwrap_err();
        assert!(matches!(err, PanelError::DuplicateKey { ref country, .. } if country == "US"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "country,date,variable,value\nUS,2010-03-31,ShortRate,0.2\nUS,2010-06-30,ShortRate,abc\n";
        match read_panel_csv(csv.as_bytes(), &CsvSchema::new(Frequency::Quarterly)).unwrap_err() {
            PanelError::MalformedRow { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let bad_date = "country,date,variable,value\nUS,31/03/2010,ShortRate,0.2\n";
        assert!(matches!(
            read_panel_csv(bad_date.as_bytes(), &CsvSchema::new(Frequency::Quarterly)),
            Err(PanelError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn frequency_mismatch() {
        let csv = "country,date,variable,value\nUS,2010-03-30,ShortRate,0.2\n";
        assert!(matches!(
            read_panel_csv(csv.as_bytes(), &CsvSchema::new(Frequency::Quarterly)),
            Err(PanelError::FrequencyMismatch { .. })
        ));
        // weekly dates on two different weekdays
        let csv = "country,date,variable,value\nUS,2010-01-06,F,1\nUS,2010-01-14,F,2\n";
        assert!(matches!(
            read_panel_csv(csv.as_bytes(), &CsvSchema::new(Frequency::Weekly)),
            Err(PanelError::FrequencyMismatch { .. })
        ));
    }

    #[test]
    fn custom_column_names() {
        let csv = "iso,when,series,obs\nUS,2010-12-31,X,1.5\n";
        let schema = CsvSchema {
            frequency: Frequency::Annual,
            country: "iso".into(),
            date: "when".into(),
            variable: "series".into(),
            value: "obs".into(),
        };
        let t = read_panel_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(t.get("US", d(2010, 12, 31), "X"), Some(1.5));
    }

    #[test]
    fn winsorize_one_to_hundred() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = one_var(&vals);
        let w = winsorize(&t, 10.0, 90.0).unwrap();
        // brute-force type-7 oracle: h = (n-1)p, interpolate between neighbours
        let oracle = |p: f64| {
            let h = 99.0 * p;
            let lo = h.floor();
            vals[lo as usize] + (h - lo) * (vals[lo as usize + 1] - vals[lo as usize])
        };
        let (lo, hi) = (oracle(0.1), oracle(0.9));
        assert_abs_diff_eq!(lo, 10.9, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 90.1, epsilon = 1e-12);
        let out = w.pooled("x");
        for (orig, new) in vals.iter().zip(&out) {
            assert_abs_diff_eq!(*new, orig.clamp(lo, hi), epsilon = 1e-12);
        }
    }

    #[test]
    fn winsorize_inside_and_constant_unchanged() {
        let t = one_var(&[5.0; 12]);
        assert_eq!(winsorize(&t, 1.0, 99.0).unwrap(), t);
        let t = one_var(&[1.0, 2.0]);
        assert_eq!(winsorize(&t, 0.0, 100.0).unwrap(), t);
        assert!(matches!(winsorize(&t, 50.0, 10.0), Err(PanelError::InvalidBounds { .. })));
    }

    #[test]
    fn zscore_basic() {
        let z = zscore_normalize(&one_var(&[1.0, 2.0, 3.0]), &["x"]).unwrap();
        assert_eq!(z.pooled("x"), vec![-1.0, 0.0, 1.0]);
        assert!(matches!(zscore_normalize(&one_var(&[2.0; 4]), &["x"]), Err(PanelError::ZeroVariance(_))));
    }

    #[test]
    fn minmax_basic() {
        assert_eq!(minmax_normalize(&one_var(&[2.0, 4.0, 6.0]), &["x"]).unwrap().pooled("x"), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&one_var(&[0.0, 1.0]), &["x"]).unwrap().pooled("x"), vec![0.0, 1.0]);
        assert!(matches!(minmax_normalize(&one_var(&[3.0; 3]), &["x"]), Err(PanelError::ZeroRange(_))));
    }

    #[test]
    fn log_return_cases() {
        assert_eq!(log_return(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        let r = log_return(&[100.0, 100.0 * 0.01f64.exp()]).unwrap();
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-12);
        assert!(matches!(log_return(&[1.0, 0.0]), Err(PanelError::NonPositiveValue { index: 1, .. })));
    }

    #[test]
    fn balance_drops_gappy_country() {
        let rows = vec![
            ("A".to_string(), d(2001, 3, 31), "x".to_string(), 1.0),
            ("A".to_string(), d(2001, 6, 30), "x".to_string(), 1.0),
            ("B".to_string(), d(2001, 3, 31), "x".to_string(), 1.0),
        ];
        let t = PanelTable::from_observations(Frequency::Quarterly, rows).unwrap();
        assert!(!t.is_balanced());
        let a = t.balance(BalanceStrategy::DropCountries);
        assert!(a.is_balanced());
        assert_eq!(a.countries(), vec!["A".to_string()]);
        let p = t.balance(BalanceStrategy::DropPeriods);
        assert!(p.is_balanced());
        assert_eq!(p.dates(), vec![d(2001, 3, 31)]);
    }

    #[test]
    fn regime_classes() {
        assert_eq!(RegimeClass::from_index(6), Some(RegimeClass::FreeFloat));
        assert_eq!(RegimeClass::from_index(1), Some(RegimeClass::Managed));
        assert_eq!(RegimeClass::from_index(0), None);
        let bad = CountryMeta::new("X", EconomyClass::AE, [(2000, 7u8)].into(), BTreeMap::new());
        assert!(bad.is_err());
        let bad = CountryMeta::new("X", EconomyClass::AE, BTreeMap::new(), [(2000, 1.5)].into());
        assert!(bad.is_err());
    }
}
