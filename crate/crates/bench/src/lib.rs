//! Fixtures shared by the benchmarks.

use gluco_core::baselines::bb_dose;
use gluco_core::esn::Normalizer;
use gluco_core::mealgen::{carbs_per_step, default_specs, sample_day};
use gluco_core::profiles::ProfileFile;
use gluco_core::simcore::{steady_state, step_patient, STEP_MINUTES};
use gluco_core::{Ensemble, EsnHyper, ProfileId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A default-size ensemble fitted on `days` of basal-bolus data from the
/// default adult, with live states positioned mid-afternoon.
pub fn trained_ensemble(days: usize) -> Ensemble {
    let id: ProfileId = "adult#001".parse().expect("valid id");
    let entry = ProfileFile::shipped()
        .get(id)
        .cloned()
        .expect("shipped profile");
    let mut ens = Ensemble::init_ensemble(
        EsnHyper::default(),
        Normalizer::for_basal(entry.params.basal_rate),
        5,
        7,
    )
    .expect("valid hyperparameters");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let specs = default_specs();
    for day in 0..days {
        ens.reset_states();
        let carbs = carbs_per_step(&sample_day(&specs, &mut rng), 288);
        let mut state = steady_state(&entry.params);
        let mut bg = state.plasma_glucose;
        let steps = if day + 1 == days { 140 } else { 288 };
        for &c in &carbs[..steps] {
            let insulin = bb_dose(&entry.bb, bg, c);
            let bolus = insulin - entry.bb.bas;
            (state, bg) =
                step_patient(&state, &entry.params, insulin, c, STEP_MINUTES).expect("finite");
            ens.advance(bolus, c);
            ens.record(bg);
        }
        if day + 1 < days {
            ens.fit().expect("fit");
        }
    }
    ens
}
