//! Synthetic instances and loaders for ratings and grayscale images.

mod image;
mod movielens;
mod synthetic;

pub use self::image::{load_image_gray, save_image_gray};
pub use self::movielens::{
    load_movielens, parse_movielens, LoadProvenance, MovieLensOptions, RatingsMatrix,
};
pub use self::synthetic::{gen_synthetic, SyntheticSpec};
