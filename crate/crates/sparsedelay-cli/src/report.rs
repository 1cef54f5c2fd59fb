//! The `analyze` report: stability, H2 value, gradients, and costs of a
//! stored design.

use crate::io::DesignFile;
use sparsedelay::h2::{gradients, h2_norm};
use sparsedelay::lyapunov::{spectral_abscissa, HURWITZ_MARGIN};
use sparsedelay::model::{build_masks, check_stabilizability, PlantModel};
use sparsedelay::netcost::{channel_counts, sbw, BandwidthModel};
use sparsedelay::spectral::{build_closed_loop, SpectralBasis};
use sparsedelay::{Error, Result};
use std::fmt::Write as _;

/// Renders the analysis report; fails when the stored design does not
/// re-verify as stabilizing.
pub fn analyze(
    design: &DesignFile,
    plant: &PlantModel<f64>,
    bw: Option<&BandwidthModel<f64>>,
    n_grid: usize,
) -> Result<String> {
    let masks = build_masks(&design.topology);
    let basis = SpectralBasis::new(n_grid, plant.state_dim())?;
    let lp = build_closed_loop(plant, &design.k, &masks, design.tau_o, design.c, &basis)?;
    let abscissa = spectral_abscissa(&lp.a_cl)?;
    if abscissa >= HURWITZ_MARGIN {
        return Err(Error::Unstable { abscissa });
    }
    let sol = h2_norm(&lp, plant)?;
    let grad = gradients(&lp, &sol, &masks, &basis)?;
    let counts = channel_counts(&design.k, &design.topology)?;

    let mut s = String::new();
    let _ = writeln!(s, "design analysis");
    let _ = writeln!(s, "  states {}, inputs {}, CNs {}", plant.state_dim(), plant.input_dim(), design.topology.n_cn());
    let _ = writeln!(s, "  tau_o {:.6e}  c {:.6}  tau_d {:.6e}", design.tau_o, design.c, design.c * design.tau_o);
    let _ = writeln!(s, "  spectral abscissa {abscissa:.6e} (grid {n_grid})");
    let _ = writeln!(s, "  J {:.9e}", sol.j);
    let _ = writeln!(
        s,
        "  gradients: dJ/dtau_o {:.4e}  dJ/dc {:.4e}  |dJ/dK|_F {:.4e}",
        grad.dj_dtau_o,
        grad.dj_dc,
        grad.dj_dk.norm()
    );
    let _ = writeln!(
        s,
        "  channels: n_cp {} (rows {} + cols {})  n_cc {}  links {}",
        counts.n_cp,
        counts.n_row,
        counts.n_col,
        counts.n_cc,
        counts.intra_links()
    );
    if let Some(model) = bw {
        let cost = sbw(design.c * design.tau_o, design.tau_o, &counts, model)?;
        let _ = writeln!(s, "  S_BW {:.6e} (budget {:.6e})", cost, model.s_b);
    }
    let stab = check_stabilizability(plant);
    let _ = writeln!(
        s,
        "  open loop: stabilizable {}  detectable {}",
        stab.stabilizable, stab.detectable
    );
    Ok(s)
}
