use alloc::vec::Vec;

use super::losses::{cycle_loss, discriminator_loss, generator_adv_loss, total_generator_loss, BoundGenerator};
use super::nets::{Discriminator, DiscriminatorCfg, Generator, GeneratorCfg};
use crate::rng::{derive_seed, rng_from, tag};
use crate::tensor::{grad_check, GradCheckOptions, GradCheckReport, Tensor};
use crate::Result;

/// Finite-difference checks of the full CycleGAN objective in 64-bit: the
/// total generator loss with respect to both generators' parameters, and
/// the two discriminator losses with respect to theirs.
pub fn composite_grad_check(
    gen: &GeneratorCfg,
    disc: &DiscriminatorCfg,
    side: usize,
    max_coords: usize,
    seed: u64,
) -> Result<(GradCheckReport, GradCheckReport)> {
    let mut rng = rng_from(derive_seed(seed, &[tag("composite")]));
    let f = Generator::<f64>::new(gen, side, "F", &mut rng)?;
    let g = Generator::<f64>::new(gen, side, "G", &mut rng)?;
    let da = Discriminator::<f64>::new(disc, "D_A", &mut rng)?;
    let db = Discriminator::<f64>::new(disc, "D_B", &mut rng)?;
    let xa = Tensor::<f64>::randn(&[2, 1, side, side], 1.0, &mut rng);
    let xb = Tensor::<f64>::randn(&[2, 1, side, side], 1.0, &mut rng);
    let opts = GradCheckOptions {
        max_coords: Some(max_coords),
        seed,
        ..Default::default()
    };
    let nf = f.params.len();
    let ng = g.params.len();
    let gen_params: Vec<Tensor<f64>> = f
        .params
        .iter()
        .chain(g.params.iter())
        .map(|p| p.value.clone())
        .collect();
    let gen_report = grad_check(
        &gen_params,
        |t, v| {
            let dav = da.params.bind_frozen(t)?;
            let dbv = db.params.bind_frozen(t)?;
            let a = t.constant(xa.clone())?;
            let b = t.constant(xb.clone())?;
            let fm = BoundGenerator {
                net: &f,
                vars: &v[..nf],
            };
            let gm = BoundGenerator {
                net: &g,
                vars: &v[nf..nf + ng],
            };
            let c = cycle_loss(t, &fm, &gm, a, b)?;
            let sb = db.forward(t, &dbv, c.fake_b)?;
            let sa = da.forward(t, &dav, c.fake_a)?;
            let adv_f = generator_adv_loss(t, sb)?;
            let adv_g = generator_adv_loss(t, sa)?;
            total_generator_loss(t, adv_f, adv_g, c.loss, 10.0)
        },
        opts,
    )?;

    let na = da.params.len();
    let disc_params: Vec<Tensor<f64>> = da
        .params
        .iter()
        .chain(db.params.iter())
        .map(|p| p.value.clone())
        .collect();
    let disc_report = grad_check(
        &disc_params,
        |t, v| {
            let fv = f.params.bind_frozen(t)?;
            let gv = g.params.bind_frozen(t)?;
            let a = t.constant(xa.clone())?;
            let b = t.constant(xb.clone())?;
            let fake_b = f.forward(t, &fv, a)?;
            let fake_a = g.forward(t, &gv, b)?;
            let fake_b = t.detach(fake_b)?;
            let fake_a = t.detach(fake_a)?;
            let (va, vb) = (&v[..na], &v[na..]);
            let ra = da.forward(t, va, a)?;
            let fa = da.forward(t, va, fake_a)?;
            let rb = db.forward(t, vb, b)?;
            let fb = db.forward(t, vb, fake_b)?;
            let la = discriminator_loss(t, ra, fa)?;
            let lb = discriminator_loss(t, rb, fb)?;
            t.add(la, lb)
        },
        opts,
    )?;
    Ok((gen_report, disc_report))
}
