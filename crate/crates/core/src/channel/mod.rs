//! Synthetic Rayleigh fading channels and observation datasets.

mod dataset;
mod sim;

pub use dataset::{
    decode_dataset, doppler_bin, encode_dataset, make_dataset, read_dataset, write_dataset,
    ChannelDataset, Condition, DatasetSpec, InstanceRecord, Split, DATASET_MAGIC, DATASET_VERSION,
    DOPPLER_BINS,
};
pub use sim::{
    exponential_pdp, generate_instance, noise_draws, noise_variance_per_component, observe,
    observe_with_noise, ChannelConfig, ChannelInstance, PilotPattern, DEFAULT_NUM_SINUSOIDS,
    DEFAULT_SYMBOL_PERIOD_S,
};
