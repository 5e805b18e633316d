//! Signature image preprocessing: Otsu binarization, tight cropping,
//! seeded augmentation into 224×224 views, and the overlapping patch grid.

mod augment;
mod crop;
mod otsu;
mod patch;

pub use augment::{
    apply_params, augment, eval_view, make_view_pair, AugmentConfig, AugmentParams, CropRect, View, VIEW_SIZE,
};
pub use crop::{crop_signature, ink_count, tight_crop, BoundingBox};
pub use otsu::{histogram, otsu_threshold};
pub use patch::{patchify, PatchGrid, GRID_SIDE, N_PATCHES, PATCH_SIZE, PATCH_STRIDE};
