//! `params`: parameter counts for the resolved configuration, split into
//! the forward model and the energy-side additions.

use eqt_model::{init_params, param_report};
use eqt_train::RunConfig;

pub fn cmd_params(run: &RunConfig) -> String {
    let p = init_params::<f32>(&run.arch(), run.seed);
    let r = param_report(&p);
    format!(
        "embedding        {:>10}\n\
         forward stack    {:>10}\n\
         reverse model    {:>10}\n\
         mask head        {:>10}\n\
         total            {:>10}\n\
         energy overhead  {:>9.2}%\n",
        r.embedding,
        r.forward,
        r.reverse,
        r.mask_head,
        r.total,
        r.energy_overhead * 100.0
    )
}
