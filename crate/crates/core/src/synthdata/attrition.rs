use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{stage_rng, AttritionMode, AttritionStatus, ConflictClass, Population, SynthError, WAVES};

/// Splits `total` into integer parts proportional to `shares` by largest
/// remainder; ties go to the earlier entry.
fn allocate(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Marks households lost by the final wave and reweights the survivors.
///
/// Exactly `round(rate · N)` households are lost, split across the five
/// reasons by the configured mix. Lost households keep their final-wave
/// record with its status; interviewed movers become `tracked`. Final-wave
/// weights of survivors are scaled by the inverse weighted response rate of
/// their first-wave LGA.
pub fn apply_attrition(pop: &mut Population, seed: u64) -> Result<(), SynthError> {
    let cfg = pop.config.clone();
    cfg.validate()?;
    let n = pop.panel.n_households();
    let n_lost = (cfg.attrition_rate * n as f64).round() as usize;
    let counts = allocate(n_lost, &cfg.attrition_mix);
    let mut rng = stage_rng(seed, 2);

    let mut status = vec![AttritionStatus::Interviewed; n];
    match cfg.attrition_mode {
        AttritionMode::Random => {
            let final_class = |h: usize| pop.lga(pop.panel.record(h, WAVES).lga_id).class;
            let mut by_class: [Vec<usize>; 3] = Default::default();
            for h in 0..n {
                by_class[final_class(h).index()].push(h);
            }
            for group in &mut by_class {
                group.shuffle(&mut rng);
            }
            // Crisis-area losses come from the most violent LGAs first.
            let crisis = counts[4];
            let mut order: Vec<usize> = by_class[ConflictClass::Always.index()]
                .iter()
                .chain(&by_class[ConflictClass::Some.index()])
                .chain(&by_class[ConflictClass::None.index()])
                .copied()
                .collect();
            let rest = order.split_off(crisis.min(order.len()));
            for &h in &order {
                status[h] = AttritionStatus::CrisisArea;
            }
            let mut rest = rest;
            rest.shuffle(&mut rng);
            let mut it = rest.into_iter();
            for (reason, &k) in AttritionStatus::LOST[..4].iter().zip(&counts[..4]) {
                for h in it.by_ref().take(k) {
                    status[h] = *reason;
                }
            }
        }
        AttritionMode::Poorest => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                pop.panel
                    .record(a, 1)
                    .expenditure_pc
                    .total_cmp(&pop.panel.record(b, 1).expenditure_pc)
                    .then(a.cmp(&b))
            });
            order.truncate(n_lost);
            order.shuffle(&mut rng);
            let mut it = order.into_iter();
            for (reason, &k) in AttritionStatus::LOST.iter().zip(&counts) {
                for h in it.by_ref().take(k) {
                    status[h] = *reason;
                }
            }
        }
    }

    let mut totals: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for (h, s) in status.iter().enumerate() {
        let lga = pop.panel.record(h, 1).lga_id;
        let w = pop.panel.record(h, WAVES).weight;
        let e = totals.entry(lga).or_default();
        e.0 += w;
        if s.is_interviewed() {
            e.1 += w;
        }
    }
    for (h, s) in status.into_iter().enumerate() {
        let moved = pop.panel.ever_migrated(h);
        let lga = pop.panel.record(h, 1).lga_id;
        let rec = pop.panel.record_mut(h, WAVES);
        rec.attrition_status = if s == AttritionStatus::Interviewed && moved {
            AttritionStatus::Tracked
        } else {
            s
        };
        if s.is_interviewed() {
            let (all, kept) = totals[&lga];
            rec.weight *= all / kept;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_population, SynthConfig};

    fn lost(pop: &Population) -> Vec<AttritionStatus> {
        (0..pop.panel.n_households())
            .map(|h| pop.panel.record(h, WAVES).attrition_status)
            .filter(|s| !s.is_interviewed())
            .collect()
    }

    #[test]
    fn largest_remainder() {
        assert_eq!(allocate(418, &[47.0, 100.0, 84.0, 48.0, 139.0]), vec![47, 100, 84, 48, 139]);
        assert_eq!(allocate(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(allocate(0, &[1.0, 2.0]), vec![0, 0]);
    }

    #[test]
    fn default_rate_and_mix() {
        let mut pop = generate_population(&SynthConfig::default(), 5).unwrap();
        apply_attrition(&mut pop, 5).unwrap();
        let l = lost(&pop);
        let rate = l.len() as f64 / 5000.0;
        assert!((rate - 0.083).abs() <= 0.005);
        let crisis = l.iter().filter(|&&s| s == AttritionStatus::CrisisArea).count();
        assert!((crisis as f64 / l.len() as f64 - 139.0 / 418.0).abs() < 0.01);
        // Crisis cases sit in always-in-conflict LGAs while those last.
        let always_households = (0..5000)
            .filter(|&h| pop.lga(pop.panel.record(h, WAVES).lga_id).class == ConflictClass::Always)
            .count();
        let crisis_in_always = (0..5000)
            .filter(|&h| {
                let r = pop.panel.record(h, WAVES);
                r.attrition_status == AttritionStatus::CrisisArea
                    && pop.lga(r.lga_id).class == ConflictClass::Always
            })
            .count();
        assert_eq!(crisis_in_always, crisis.min(always_households));
    }

    #[test]
    fn crisis_share_follows_the_mix() {
        let cfg = SynthConfig {
            attrition_mix: [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
            ..SynthConfig::default()
        };
        let mut pop = generate_population(&cfg, 1).unwrap();
        apply_attrition(&mut pop, 1).unwrap();
        let l = lost(&pop);
        let crisis = l.iter().filter(|&&s| s == AttritionStatus::CrisisArea).count() as f64;
        assert!((crisis / l.len() as f64 - 139.0 / 466.0).abs() <= 0.05);
    }

    #[test]
    fn zero_rate_changes_nothing_but_tracking() {
        let cfg = SynthConfig {
            attrition_rate: 0.0,
            ..SynthConfig::default()
        };
        let mut pop = generate_population(&cfg, 2).unwrap();
        let before = pop.panel.clone();
        apply_attrition(&mut pop, 2).unwrap();
        for (a, b) in before.records.iter().zip(&pop.panel.records) {
            assert_eq!(a.weight, b.weight);
            assert!(b.attrition_status.is_interviewed());
        }
    }

    #[test]
    fn reweighting_preserves_lga_totals() {
        let mut pop = generate_population(&SynthConfig::default(), 3).unwrap();
        let n = pop.panel.n_households();
        let mut before: BTreeMap<u32, f64> = BTreeMap::new();
        for h in 0..n {
            *before.entry(pop.panel.record(h, 1).lga_id).or_default() += pop.panel.record(h, WAVES).weight;
        }
        apply_attrition(&mut pop, 3).unwrap();
        let mut after: BTreeMap<u32, f64> = BTreeMap::new();
        for h in 0..n {
            let r = pop.panel.record(h, WAVES);
            if r.attrition_status.is_interviewed() {
                *after.entry(pop.panel.record(h, 1).lga_id).or_default() += r.weight;
            }
        }
        for (lga, total) in after {
            assert!((total - before[&lga]).abs() <= 1e-9 * before[&lga]);
        }
    }

    #[test]
    fn poorest_mode_removes_the_lower_tail() {
        let cfg = SynthConfig {
            attrition_mode: AttritionMode::Poorest,
            ..SynthConfig::default()
        };
        let mut pop = generate_population(&cfg, 4).unwrap();
        apply_attrition(&mut pop, 4).unwrap();
        let n = pop.panel.n_households();
        let max_lost = (0..n)
            .filter(|&h| !pop.panel.record(h, WAVES).attrition_status.is_interviewed())
            .map(|h| pop.panel.record(h, 1).expenditure_pc)
            .fold(0.0, f64::max);
        let min_kept = (0..n)
            .filter(|&h| pop.panel.record(h, WAVES).attrition_status.is_interviewed())
            .map(|h| pop.panel.record(h, 1).expenditure_pc)
            .fold(f64::INFINITY, f64::min);
        assert!(max_lost <= min_kept);
    }
}
