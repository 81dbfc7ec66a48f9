//! Rendering of reverberant noisy FOA signals and intensity-vector features.

mod convolve;
mod features;
mod noise;
mod stft;

pub use convolve::{convolve_foa, fft_convolve};
pub use features::{intensity_features, read_features, write_features, FeatureTensor, FEATURE_ROWS};
pub use noise::{
    babble_noise, mix_noise, noise_scale, sample_snr, speech_shaped_noise, synthetic_speech,
    SNR_MEAN_DB, SNR_STD_DB,
};
pub use stft::{stft, Spectrogram, StftConfig};
