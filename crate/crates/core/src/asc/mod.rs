//! Attributed scattering center (ASC) synthesis.

pub mod kernel;
pub mod radar;
pub mod scatter;
pub mod transform;

pub use kernel::{build_kernel_bank, length_from_pixels, synthesize_kernel, AscKernelSpec, KernelBank, NormalizeMode};
pub use radar::{make_radar_grid, FrequencyAspectGrid, RadarParams};
pub use scatter::{asc_response, scene_spectrum, ResponseMode, ScatteringCenter};
pub use transform::{center_index, centered_dft2, crop_center, spectrum_to_image, spectrum_to_image_cropped, spectrum_to_image_window};
