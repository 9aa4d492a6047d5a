use std::io::Write;

use super::{AgentProfile, LgaProfile, PanelDataset, WAVES};

pub const PANEL_COLUMNS: [&str; 33] = [
    "household_id",
    "wave",
    "lga_id",
    "state_id",
    "rururb",
    "weight",
    "pcexp",
    "hhsize",
    "dep_share",
    "hh_sex",
    "hh_agey",
    "hh_eduyrs",
    "hh_empl",
    "hh_marstat",
    "hh_language",
    "dwel_rooms",
    "dwel_roof",
    "dwel_wall",
    "dwel_floor",
    "dwel_toilet",
    "dwel_fuellight",
    "dwel_fuelcook",
    "dwel_gdisp",
    "own_tv",
    "own_fridge",
    "own_stove",
    "own_bcycle",
    "own_car",
    "own_iron",
    "conflict",
    "migrated",
    "risk_averse",
    "attrition_status",
];

/// One row per household-wave. A missing risk answer is an empty cell.
pub fn write_panel_csv<W: Write>(panel: &PanelDataset, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", PANEL_COLUMNS.join(","))?;
    for r in &panel.records {
        let c = &r.covariates;
        let risk = match r.risk_averse {
            Some(a) => u8::from(a).to_string(),
            None => String::new(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.household_id,
            r.wave,
            r.lga_id,
            r.state_id,
            u8::from(c.is_rural),
            r.weight,
            r.expenditure_pc,
            c.hhsize,
            c.dep_share,
            c.hh_sex,
            c.hh_agey,
            c.hh_eduyrs,
            c.hh_empl,
            c.hh_marstat,
            c.hh_language,
            c.dwel_rooms,
            c.dwel_roof,
            c.dwel_wall,
            c.dwel_floor,
            c.dwel_toilet,
            c.dwel_fuellight,
            c.dwel_fuelcook,
            c.dwel_gdisp,
            c.own_tv,
            c.own_fridge,
            c.own_stove,
            c.own_bcycle,
            c.own_car,
            c.own_iron,
            u8::from(r.conflict),
            u8::from(r.migrated),
            risk,
            r.attrition_status.as_str(),
        )?;
    }
    Ok(())
}

pub fn write_agents_csv<W: Write>(agents: &[AgentProfile], mut w: W) -> std::io::Result<()> {
    writeln!(w, "household_id,tau,risk_averse_truth")?;
    for a in agents {
        writeln!(w, "{},{},{}", a.household_id, a.tau, u8::from(a.risk_averse_truth))?;
    }
    Ok(())
}

pub fn write_lgas_csv<W: Write>(lgas: &[LgaProfile], mut w: W) -> std::io::Result<()> {
    let waves: Vec<String> = (1..=WAVES).map(|t| format!("fatalities_w{t}")).collect();
    writeln!(w, "lga_id,state_id,{},conflict_class", waves.join(","))?;
    for l in lgas {
        let counts: Vec<String> = l.fatalities.iter().map(u32::to_string).collect();
        writeln!(w, "{},{},{},{}", l.lga_id, l.state_id, counts.join(","), l.class.as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use crate::synthdata::{synthesize, SynthConfig};

    #[test]
    fn panel_round_trips_through_frame() {
        let cfg = SynthConfig {
            n_households: 200,
            n_lgas: 20,
            n_states: 5,
            ..SynthConfig::default()
        };
        let pop = synthesize(&cfg, 1).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&pop.panel, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), PANEL_COLUMNS.join(","));
        let f = Frame::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(f.nrows(), 200 * WAVES);
        let pcexp = f.column("pcexp").unwrap();
        for (r, v) in pop.panel.records.iter().zip(pcexp) {
            assert_eq!(Some(r.expenditure_pc), *v);
        }
        let risk = f.column("risk_averse").unwrap();
        assert_eq!(risk.iter().filter(|v| v.is_some()).count(), pop.panel.records.iter().filter(|r| r.risk_averse.is_some()).count());
        assert_eq!(f.text("attrition_status").unwrap().len(), 200 * WAVES);
    }

    #[test]
    fn companion_files() {
        let cfg = SynthConfig {
            n_households: 100,
            n_lgas: 10,
            n_states: 3,
            ..SynthConfig::default()
        };
        let pop = synthesize(&cfg, 2).unwrap();
        let mut a = Vec::new();
        write_agents_csv(&pop.agents, &mut a).unwrap();
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 101);
        let mut l = Vec::new();
        write_lgas_csv(&pop.lgas, &mut l).unwrap();
        let text = String::from_utf8(l).unwrap();
        assert!(text.starts_with("lga_id,state_id,fatalities_w1,"));
        assert_eq!(text.lines().count(), 11);
    }
}
