//! The ten bandwidth selectors on one sample from the trimodal model, with
//! the criterion value at each selected matrix.

use mslab::selectors::{select, SelectorSpec};
use mslab::Registry;

fn main() -> mslab::Result<()> {
    let registry = Registry::builtin();
    let model = registry.get("trimodal-iii")?;
    let data = model.model.sample(400, 2013)?;
    println!("{:5} {:>9} {:>9} {:>9} {:>12} {:>6}", "id", "h11", "h12", "h22", "value", "evals");
    for spec in SelectorSpec::roster() {
        let r = select(&spec, &data)?;
        let e = r.h.entries();
        let value = r.value.map_or("-".to_string(), |v| format!("{v:.4e}"));
        println!(
            "{:5} {:9.5} {:9.5} {:9.5} {:>12} {:6}{}",
            r.selector,
            e[0],
            e[1],
            e[3],
            value,
            r.evaluations,
            if r.converged { "" } else { "  (not converged)" }
        );
    }

    // A scalar-class variant and a fixed pilot are one parse away.
    let spec: SelectorSpec = "scvs".parse()?;
    let spec = spec.with_pilot("fixed:0.2,0,0,0.2".parse()?);
    let r = select(&spec, &data)?;
    println!("scvs with a fixed pilot: h^2 = {:.5}", r.h.get(0, 0));
    Ok(())
}
