use std::collections::BTreeMap;
use std::fs::File;

use super::{io_err, PipelineConfig, PipelineError};
use crate::frame::Frame;
use crate::synthdata::ConflictClass;

/// Migration-status codes, as in the published tables.
pub const MIGRANT: f64 = 0.0;
pub const NON_MIGRANT: f64 = 1.0;

const REQUIRED: [&str; 4] = ["household_id", "wave", "lga_id", "pcexp"];

/// The panel with the columns every step derives from it:
///
/// - `ln_pcexp`: log expenditure, missing where expenditure is not positive
/// - `observed`: 1 when the row was interviewed or tracked
/// - `lga_class`: conflict class (0 none, 1 some, 2 always) of the current LGA
/// - `origin_class`: class of the household's first-wave LGA
/// - `migrant_status`: 0 if the household ever changed LGA, else 1
#[derive(Debug, Clone)]
pub struct PanelData {
    pub frame: Frame,
    pub last_wave: f64,
    pub lga_classes: BTreeMap<u32, ConflictClass>,
}

fn class_code(c: ConflictClass) -> f64 {
    c.index() as f64
}

impl PanelData {
    /// Reads the configured panel (and LGA table, when given).
    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let path = cfg.input_path()?;
        let file = File::open(&path).map_err(io_err(&path))?;
        let frame = Frame::from_csv_reader(file)?;
        let classes = match &cfg.lgas {
            Some(p) => {
                if !p.exists() {
                    return Err(PipelineError::Config(format!(
                        "LGA table {} does not exist",
                        p.display()
                    )));
                }
                let f = File::open(p).map_err(io_err(p))?;
                Some(read_lga_classes(&Frame::from_csv_reader(f)?)?)
            }
            None => None,
        };
        let data = Self::from_frame(frame, classes)?;
        if cfg.weighted && !data.frame.has_column("weight") {
            return Err(PipelineError::Data(
                "weighted run but the panel has no `weight` column".into(),
            ));
        }
        Ok(data)
    }

    /// Derives the analysis columns. LGA classes come from `classes` when
    /// given, otherwise from the per-wave `conflict` flags: never flagged is
    /// `none`, flagged in every wave is `always`, anything else `some`.
    pub fn from_frame(
        mut frame: Frame,
        classes: Option<BTreeMap<u32, ConflictClass>>,
    ) -> Result<Self, PipelineError> {
        for c in REQUIRED {
            frame.column(c).map_err(|_| {
                PipelineError::Data(format!("panel is missing numeric column `{c}`"))
            })?;
        }
        let n = frame.nrows();
        if n == 0 {
            return Err(PipelineError::Data("panel has no rows".into()));
        }
        let need = |name: &str, i: usize| {
            frame.value(name, i).ok_or_else(|| {
                PipelineError::Data(format!("row {} has no `{name}`", i + 1))
            })
        };
        let mut hh = Vec::with_capacity(n);
        let mut wave = Vec::with_capacity(n);
        let mut lga = Vec::with_capacity(n);
        for i in 0..n {
            hh.push(need("household_id", i)? as u64);
            wave.push(need("wave", i)?);
            lga.push(need("lga_id", i)? as u32);
        }
        let waves: Vec<u64> = {
            let mut w: Vec<u64> = wave.iter().map(|&w| w as u64).collect();
            w.sort_unstable();
            w.dedup();
            w
        };
        let last_wave = *waves.last().unwrap() as f64;

        let classes = match classes {
            Some(c) => c,
            None => {
                let flags = frame.column("conflict").map_err(|_| {
                    PipelineError::Data(
                        "panel has no `conflict` column and no LGA table was given".into(),
                    )
                })?;
                let mut seen: BTreeMap<u32, BTreeMap<u64, bool>> = BTreeMap::new();
                for i in 0..n {
                    let flag = flags[i].is_some_and(|v| v != 0.0);
                    let e = seen.entry(lga[i]).or_default().entry(wave[i] as u64).or_default();
                    *e |= flag;
                }
                seen.into_iter()
                    .map(|(id, by_wave)| {
                        let hits = by_wave.values().filter(|&&f| f).count();
                        let class = if hits == 0 {
                            ConflictClass::None
                        } else if hits == waves.len() && by_wave.len() == waves.len() {
                            ConflictClass::Always
                        } else {
                            ConflictClass::Some
                        };
                        (id, class)
                    })
                    .collect()
            }
        };
        let class_of = |id: u32| {
            classes.get(&id).copied().ok_or_else(|| {
                PipelineError::Data(format!("LGA {id} has no conflict class"))
            })
        };

        // Household-level facts from the earliest wave on record.
        let mut first: BTreeMap<u64, usize> = BTreeMap::new();
        for i in 0..n {
            first
                .entry(hh[i])
                .and_modify(|j| {
                    if wave[i] < wave[*j] {
                        *j = i;
                    }
                })
                .or_insert(i);
        }
        let moved_flag = frame.column("migrated").ok();
        let mut moved: BTreeMap<u64, bool> = BTreeMap::new();
        for i in 0..n {
            let changed = lga[i] != lga[first[&hh[i]]]
                || moved_flag.is_some_and(|m| m[i].is_some_and(|v| v != 0.0));
            *moved.entry(hh[i]).or_default() |= changed;
        }

        let observed: Vec<f64> = match frame.text("attrition_status") {
            Ok(s) => s
                .iter()
                .map(|v| f64::from(u8::from(v == "interviewed" || v == "tracked")))
                .collect(),
            Err(_) => vec![1.0; n],
        };
        let ln: Vec<Option<f64>> = frame
            .column("pcexp")?
            .iter()
            .map(|v| v.filter(|&x| x > 0.0).map(f64::ln))
            .collect();
        let mut lga_class = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for i in 0..n {
            lga_class.push(class_code(class_of(lga[i])?));
            origin.push(class_code(class_of(lga[first[&hh[i]]])?));
            status.push(if moved[&hh[i]] { MIGRANT } else { NON_MIGRANT });
        }
        frame.insert("ln_pcexp", ln)?;
        frame.insert_dense("observed", observed)?;
        frame.insert_dense("lga_class", lga_class)?;
        frame.insert_dense("origin_class", origin)?;
        frame.insert_dense("migrant_status", status)?;
        Ok(Self {
            frame,
            last_wave,
            lga_classes: classes,
        })
    }

    fn mask(&self, keep: impl Fn(usize) -> bool) -> Vec<bool> {
        (0..self.frame.nrows()).map(keep).collect()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.frame.value("observed", i) == Some(1.0)
    }

    pub fn wave_of(&self, i: usize) -> f64 {
        self.frame.value("wave", i).unwrap()
    }

    /// Observed rows, all waves.
    pub fn observed_rows(&self) -> Frame {
        self.frame.filter(&self.mask(|i| self.is_observed(i)))
    }

    /// Every household's row in `wave`, observed or not.
    pub fn wave_rows(&self, wave: f64) -> Frame {
        self.frame.filter(&self.mask(|i| self.wave_of(i) == wave))
    }

    /// Observed rows of the last wave: the sample carrying risk answers.
    pub fn final_sample(&self) -> Frame {
        self.frame
            .filter(&self.mask(|i| self.is_observed(i) && self.wave_of(i) == self.last_wave))
    }
}

/// Row masks over `sample` for the migration-model columns: migrants always,
/// non-migrants when their origin class is at least the column's threshold.
pub fn column_masks(sample: &Frame, thresholds: &[ConflictClass]) -> Vec<Vec<bool>> {
    thresholds
        .iter()
        .map(|&t| {
            (0..sample.nrows())
                .map(|i| {
                    let migrant = sample.value("migrant_status", i) == Some(MIGRANT);
                    let origin = sample.value("origin_class", i).unwrap_or(0.0);
                    migrant || origin >= class_code(t)
                })
                .collect()
        })
        .collect()
}

fn read_lga_classes(f: &Frame) -> Result<BTreeMap<u32, ConflictClass>, PipelineError> {
    let ids = f
        .column("lga_id")
        .map_err(|_| PipelineError::Data("LGA table has no `lga_id` column".into()))?;
    let classes = f
        .text("conflict_class")
        .map_err(|_| PipelineError::Data("LGA table has no `conflict_class` column".into()))?;
    ids.iter()
        .zip(classes)
        .map(|(id, c)| {
            let id = id.ok_or_else(|| PipelineError::Data("LGA table has a blank id".into()))?;
            let class = ConflictClass::parse(c)
                .ok_or_else(|| PipelineError::Data(format!("unknown conflict class `{c}`")))?;
            Ok((id as u32, class))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Two LGAs over three waves: LGA 1 is quiet, LGA 2 has conflict in every
    // wave. Household 10 moves from 2 to 1 at wave 3; household 11 stays in 2.
    const PANEL: &str = "\
household_id,wave,lga_id,pcexp,conflict,migrated,attrition_status
10,1,2,100,1,0,interviewed
10,2,2,110,1,0,interviewed
10,3,1,150,0,1,tracked
11,1,2,90,1,0,interviewed
11,2,2,80,1,0,interviewed
11,3,2,0,1,0,refused
";

    fn panel() -> PanelData {
        PanelData::from_frame(Frame::from_csv_reader(PANEL.as_bytes()).unwrap(), None).unwrap()
    }

    #[test]
    fn derived_columns() {
        let p = panel();
        let f = &p.frame;
        assert_eq!(p.last_wave, 3.0);
        assert_eq!(p.lga_classes[&1], ConflictClass::None);
        assert_eq!(p.lga_classes[&2], ConflictClass::Always);
        let col = |n: &str| f.column(n).unwrap().iter().map(|v| v.unwrap_or(f64::NAN)).collect::<Vec<_>>();
        assert_eq!(col("migrant_status"), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(col("origin_class"), vec![2.0; 6]);
        assert_eq!(col("lga_class"), vec![2.0, 2.0, 0.0, 2.0, 2.0, 2.0]);
        assert_eq!(col("observed"), vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(f.value("ln_pcexp", 0), Some(100f64.ln()));
        assert_eq!(f.value("ln_pcexp", 5), None);
        assert_eq!(p.final_sample().nrows(), 1);
        assert_eq!(p.observed_rows().nrows(), 5);
    }

    #[test]
    fn lga_table_overrides_flags() {
        let mut classes = BTreeMap::new();
        classes.insert(1, ConflictClass::None);
        classes.insert(2, ConflictClass::Some);
        let p = PanelData::from_frame(Frame::from_csv_reader(PANEL.as_bytes()).unwrap(), Some(classes)).unwrap();
        assert_eq!(p.frame.value("origin_class", 0), Some(1.0));
    }

    #[test]
    fn missing_columns_are_data_errors() {
        let f = Frame::from_csv_reader("household_id,wave,lga_id\n1,1,1\n".as_bytes()).unwrap();
        let err = PanelData::from_frame(f, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("pcexp"));
    }

    #[test]
    fn columns_nest() {
        let mut f = Frame::new(6);
        f.insert_dense("migrant_status", vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        f.insert_dense("origin_class", vec![0.0, 0.0, 1.0, 2.0, 2.0, 1.0]).unwrap();
        let m = column_masks(&f, &[ConflictClass::None, ConflictClass::Some, ConflictClass::Always]);
        assert_eq!(m[0], vec![true; 6]);
        assert_eq!(m[1], vec![true, false, true, true, true, true]);
        assert_eq!(m[2], vec![true, false, false, true, true, false]);
    }
}
