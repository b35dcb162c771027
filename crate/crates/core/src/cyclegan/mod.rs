//! Microphone conversion: unpaired CycleGAN mapping between the log-mel
//! spectrograms of two devices, trained with least-squares adversarial
//! losses, an L1 cycle term and a replay buffer for discriminator fakes.

mod buffer;
mod convert;
mod gradsuite;
mod losses;
mod nets;
mod search;
mod train;

pub use buffer::ReplayBuffer;
pub use convert::{convert, Direction};
pub use gradsuite::composite_grad_check;
pub use losses::{
    adv_loss_ls, cycle_loss, discriminator_loss, generator_adv_loss, total_generator_loss, BoundGenerator, CycleTerms,
    Mapping,
};
pub use nets::{Discriminator, DiscriminatorCfg, Generator, GeneratorCfg};
pub use search::{hyperparam_search, validation_cycle_loss, SearchOutcome, SearchStrategy, Trial};
pub use train::{
    discriminator_step, generator_step, spec_batch, train_mc, CycleGanModel, DomainNorm, EpochRecord, McOptim,
    McTrainConfig, McTrainOutcome, StepLosses, TrainObserver, HALVE_RANGE, LR_RANGE,
};
