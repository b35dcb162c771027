use crate::tensor::{Scalar, Tape, Var};
use crate::{Error, Result};

use super::nets::Generator;

/// Least-squares adversarial losses from discriminator score grids:
/// `loss_D = ½·mean((D(real)−1)²) + ½·mean(D(fake)²)` and
/// `loss_G = mean((D(fake)−1)²)`.
pub fn adv_loss_ls<T: Scalar>(
    t: &mut Tape<T>,
    d_real: Var,
    d_fake_for_d: Var,
    d_fake_for_g: Var,
) -> Result<(Var, Var)> {
    let shape = t.value(d_real).shape();
    if t.value(d_fake_for_d).shape() != shape || t.value(d_fake_for_g).shape() != shape {
        return Err(Error::shape("adv_loss_ls", "score grids differ in shape"));
    }
    let loss_d = discriminator_loss(t, d_real, d_fake_for_d)?;
    let loss_g = generator_adv_loss(t, d_fake_for_g)?;
    Ok((loss_d, loss_g))
}

pub fn discriminator_loss<T: Scalar>(t: &mut Tape<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let real = t.mse_const(d_real, T::one())?;
    let fake = t.mse_const(d_fake, T::zero())?;
    let sum = t.add(real, fake)?;
    t.scale(sum, T::of(0.5))
}

pub fn generator_adv_loss<T: Scalar>(t: &mut Tape<T>, d_fake: Var) -> Result<Var> {
    t.mse_const(d_fake, T::one())
}

/// A differentiable spectrogram-to-spectrogram map.
pub trait Mapping<T: Scalar> {
    fn apply(&self, t: &mut Tape<T>, x: Var) -> Result<Var>;
}

/// A generator with its parameters already bound on a tape.
pub struct BoundGenerator<'a, T> {
    pub net: &'a Generator<T>,
    pub vars: &'a [Var],
}

impl<T: Scalar> Mapping<T> for BoundGenerator<'_, T> {
    fn apply(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        self.net.forward(t, self.vars, x)
    }
}

/// Intermediate results of the two cycles.
#[derive(Debug, Clone, Copy)]
pub struct CycleTerms {
    pub fake_b: Var,
    pub rec_a: Var,
    pub fake_a: Var,
    pub rec_b: Var,
    pub loss: Var,
}

/// `mean|G(F(x_a)) − x_a| + mean|F(G(x_b)) − x_b|`.
pub fn cycle_loss<T: Scalar>(
    t: &mut Tape<T>,
    f: &dyn Mapping<T>,
    g: &dyn Mapping<T>,
    x_a: Var,
    x_b: Var,
) -> Result<CycleTerms> {
    if t.value(x_a).shape() != t.value(x_b).shape() {
        return Err(Error::shape("cycle_loss", "domain batches differ in shape"));
    }
    let fake_b = f.apply(t, x_a)?;
    let rec_a = g.apply(t, fake_b)?;
    let fake_a = g.apply(t, x_b)?;
    let rec_b = f.apply(t, fake_a)?;
    let la = t.l1(rec_a, x_a)?;
    let lb = t.l1(rec_b, x_b)?;
    let loss = t.add(la, lb)?;
    Ok(CycleTerms {
        fake_b,
        rec_a,
        fake_a,
        rec_b,
        loss,
    })
}

/// `adv_F + adv_G + λ·cycle`.
pub fn total_generator_loss<T: Scalar>(t: &mut Tape<T>, adv_f: Var, adv_g: Var, cycle: Var, lambda: T) -> Result<Var> {
    let adv = t.add(adv_f, adv_g)?;
    let cyc = t.scale(cycle, lambda)?;
    t.add(adv, cyc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::tensor::Tensor;

    struct Shift(f64);

    impl Mapping<f64> for Shift {
        fn apply(&self, t: &mut Tape<f64>, x: Var) -> Result<Var> {
            t.add_scalar(x, self.0)
        }
    }

    fn grid(t: &mut Tape<f64>, v: f64) -> Var {
        t.constant(Tensor::full(&[2, 1, 3, 3], v)).unwrap()
    }

    #[test]
    fn adversarial_values() {
        let mut t = Tape::new();
        let (one, zero, half) = (grid(&mut t, 1.0), grid(&mut t, 0.0), grid(&mut t, 0.5));
        let (ld, lg) = adv_loss_ls(&mut t, one, zero, one).unwrap();
        assert_eq!(t.value(ld).item().unwrap(), 0.0);
        assert_eq!(t.value(lg).item().unwrap(), 0.0);
        let (_, lg) = adv_loss_ls(&mut t, one, zero, half).unwrap();
        assert_eq!(t.value(lg).item().unwrap(), 0.25);
        let odd = t.constant(Tensor::zeros(&[1, 1, 3, 3])).unwrap();
        assert!(adv_loss_ls(&mut t, one, odd, one).is_err());
    }

    #[test]
    fn cycle_with_constant_maps() {
        let mut t = Tape::new();
        let mut rng = rng_from(0);
        let xa = t.constant(Tensor::randn(&[2, 1, 4, 4], 1.0, &mut rng)).unwrap();
        let xb = t.constant(Tensor::randn(&[2, 1, 4, 4], 1.0, &mut rng)).unwrap();
        let id = Shift(0.0);
        let c = cycle_loss(&mut t, &id, &id, xa, xb).unwrap();
        assert_eq!(t.value(c.loss).item().unwrap(), 0.0);
        let c = cycle_loss(&mut t, &Shift(0.7), &Shift(-0.7), xa, xb).unwrap();
        assert!(t.value(c.loss).item().unwrap() < 1e-12);
        let c = cycle_loss(&mut t, &Shift(0.3), &id, xa, xb).unwrap();
        assert!((t.value(c.loss).item().unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn total_loss_arithmetic() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(0.25)).unwrap();
        let c = t.constant(Tensor::scalar(0.1)).unwrap();
        let total = total_generator_loss(&mut t, a, a, c, 10.0f64).unwrap();
        assert!((t.value(total).item().unwrap() - 1.5).abs() < 1e-12);
        let total = total_generator_loss(&mut t, a, a, c, 0.0).unwrap();
        assert_eq!(t.value(total).item().unwrap(), 0.5);
        let z = t.constant(Tensor::scalar(0.0)).unwrap();
        let total = total_generator_loss(&mut t, z, z, z, 10.0).unwrap();
        assert_eq!(t.value(total).item().unwrap(), 0.0);
    }
}
